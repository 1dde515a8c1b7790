//! Multi-inverter plant at one point of common coupling.
//!
//! Inverters are grouped by identical parameters (in practice: identical
//! digital delay). Every inverter of a group carries the same reference, so
//! all of them inject the same current and the plant is fully described by
//! one Norton model per group plus the group sizes `N_k`:
//!
//! ```text
//! Δ(s)  = Σ_k N_k Ypv_k(s) + Yg(s)
//! i_s,i = (1 - N_i Ypv_i/Δ) ipv_i i*_i  -  (Ypv_i Yg/Δ) u_g  -  Σ_{p≠i} (N_p Ypv_i/Δ) ipv_p i*_p
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::inverter::{build_channel_model, build_norton, InverterChannelModel, InverterParams, NortonModel};
use crate::tf::{poly_roots, Polynomial, RationalFunction, DEFAULT_POLISH_ITERS};

/// Relative tolerance for removing local poles that every channel cancels.
pub const DEFLATION_REL_TOL: f64 = 1e-7;

/// Nameplate data of the step-up transformer and transmission line.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRatings {
    /// Step-up transformer rating, VA.
    pub s_stepup: f64,
    /// Short-circuit voltage, percent.
    pub us_pct: f64,
    /// Line-side (high) voltage, V.
    pub u_h: f64,
    /// Plant-side (low) voltage, V.
    pub u_l: f64,
    /// Ω/km
    pub r_line: f64,
    /// Ω/km at `omega0`
    pub x_line: f64,
    pub length_km: f64,
    /// Voltage level all impedances are referred to, V.
    pub base_voltage: f64,
    pub omega0: f64,
}

impl GridRatings {
    /// Step-up transformer and 20 km line of the reference plant, referred
    /// to the 270 V inverter side.
    pub fn reference_plant() -> Self {
        Self {
            s_stepup: 6.3e6,
            us_pct: 10.5,
            u_h: 110e3,
            u_l: 10e3,
            r_line: 0.21,
            x_line: 0.34,
            length_km: 20.0,
            base_voltage: 270.0,
            omega0: 100.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Direct { rg: f64, lg: f64 },
    Ratings(GridRatings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub spec: GridSpec,
    /// Multiplier on the resolved `Lg`, used to calibrate an uncertain grid
    /// against a known stability boundary. 1 leaves the derivation as is.
    pub lg_scale: f64,
}

impl GridParams {
    pub fn direct(rg: f64, lg: f64) -> Self {
        Self { spec: GridSpec::Direct { rg, lg }, lg_scale: 1.0 }
    }

    pub fn ratings(r: GridRatings) -> Self {
        Self { spec: GridSpec::Ratings(r), lg_scale: 1.0 }
    }

    pub fn with_lg_scale(mut self, k: f64) -> Self {
        self.lg_scale = k;
        self
    }
}

/// One step of the impedance referral, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferralStep {
    pub label: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub voltage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridImpedance {
    pub rg: f64,
    pub lg: f64,
    pub trace: Vec<ReferralStep>,
}

pub fn grid_impedance(g: &GridParams) -> Result<GridImpedance> {
    if !(g.lg_scale > 0.0 && g.lg_scale.is_finite()) {
        return Err(Error::input(format!("lg_scale must be positive, got {}", g.lg_scale)));
    }
    let (rg, lg, trace) = match &g.spec {
        GridSpec::Direct { rg, lg } => (*rg, *lg, Vec::new()),
        GridSpec::Ratings(r) => refer_ratings(r)?,
    };
    if !(rg >= 0.0 && rg.is_finite()) {
        return Err(Error::input(format!("grid resistance must be non-negative, got {rg}")));
    }
    if !(lg > 0.0 && lg.is_finite()) {
        return Err(Error::domain(format!(
            "grid inductance must be positive, got {lg} (zero impedance means infinite admittance)"
        )));
    }
    let mut trace = trace;
    let lg_scaled = lg * g.lg_scale;
    if g.lg_scale != 1.0 {
        let omega0 = match &g.spec {
            GridSpec::Ratings(r) => r.omega0,
            GridSpec::Direct { .. } => f64::NAN,
        };
        trace.push(ReferralStep {
            label: format!("lg calibration x{}", g.lg_scale),
            r_ohm: rg,
            x_ohm: lg_scaled * omega0,
            voltage: trace.last().map_or(f64::NAN, |s| s.voltage),
        });
    }
    Ok(GridImpedance { rg, lg: lg_scaled, trace })
}

fn refer_ratings(r: &GridRatings) -> Result<(f64, f64, Vec<ReferralStep>)> {
    for (name, v) in [
        ("s_stepup", r.s_stepup),
        ("u_h", r.u_h),
        ("u_l", r.u_l),
        ("base_voltage", r.base_voltage),
        ("omega0", r.omega0),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::input(format!("{name} must be positive, got {v}")));
        }
    }
    for (name, v) in [
        ("us_pct", r.us_pct),
        ("r_line", r.r_line),
        ("x_line", r.x_line),
        ("length_km", r.length_km),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::input(format!("{name} must be non-negative, got {v}")));
        }
    }
    let mut trace = Vec::new();
    let x_t = r.us_pct / 100.0 * r.u_l * r.u_l / r.s_stepup;
    trace.push(ReferralStep { label: "step-up transformer".into(), r_ohm: 0.0, x_ohm: x_t, voltage: r.u_l });
    let (r_hv, x_hv) = (r.r_line * r.length_km, r.x_line * r.length_km);
    trace.push(ReferralStep { label: "line at high voltage".into(), r_ohm: r_hv, x_ohm: x_hv, voltage: r.u_h });
    let k_line = (r.u_l / r.u_h).powi(2);
    trace.push(ReferralStep {
        label: "line referred to low voltage".into(),
        r_ohm: r_hv * k_line,
        x_ohm: x_hv * k_line,
        voltage: r.u_l,
    });
    let (r_lv, x_lv) = (r_hv * k_line, x_t + x_hv * k_line);
    trace.push(ReferralStep { label: "total at low voltage".into(), r_ohm: r_lv, x_ohm: x_lv, voltage: r.u_l });
    let k_base = (r.base_voltage / r.u_l).powi(2);
    let (rg, xg) = (r_lv * k_base, x_lv * k_base);
    trace.push(ReferralStep { label: "total at base voltage".into(), r_ohm: rg, x_ohm: xg, voltage: r.base_voltage });
    Ok((rg, xg / r.omega0, trace))
}

/// `Yg = 1 / (Rg + Lg s)`
pub fn grid_admittance(g: &GridParams) -> Result<RationalFunction> {
    let z = grid_impedance(g)?;
    Ok(admittance_of(&z))
}

fn admittance_of(z: &GridImpedance) -> RationalFunction {
    RationalFunction::canonical(Polynomial::one(), Polynomial::new(vec![z.rg, z.lg]))
}

/// A set of identical inverters sharing one reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantGroup {
    pub label: String,
    pub params: InverterParams,
    /// Transformer leakage in series with each inverter, H.
    pub lt: f64,
    pub count: u32,
}

impl PlantGroup {
    pub fn new(label: impl Into<String>, params: InverterParams, lt: f64, count: u32) -> Self {
        Self { label: label.into(), params, lt, count }
    }
}

/// Norton model of one distinct `(params, lt)` pair, with its local poles.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub params: InverterParams,
    pub lt: f64,
    pub channel: InverterChannelModel,
    pub norton: NortonModel,
    pub local_poles: Vec<Complex64>,
}

impl PlantModel {
    pub fn build(params: &InverterParams, lt: f64) -> Result<Self> {
        let params = params.normalized();
        let channel = build_channel_model(&params)?;
        let norton = build_norton(&channel, lt)?;
        let local_poles = poly_roots(norton.local_denominator(), DEFAULT_POLISH_ITERS)?.values;
        Ok(Self { params, lt, channel, norton, local_poles })
    }

    /// `L = D + LT s Yn`
    pub fn local_denominator(&self) -> &Polynomial {
        self.norton.local_denominator()
    }

    /// Number of states of one inverter: plant (3), PR controller (2), and
    /// Padé delay (2, absent for zero delay).
    pub fn state_dim(&self) -> usize {
        if self.params.total_delay() > 0.0 { 7 } else { 5 }
    }

    fn same_plant(&self, params: &InverterParams, lt: f64) -> bool {
        self.lt == lt && self.params == params.normalized()
    }
}

/// Immutable multi-inverter system. Sweeps derive new models with
/// [`SystemModel::with_count`], which only touches the scalar counts.
#[derive(Debug, Clone)]
pub struct SystemModel {
    groups: Vec<PlantGroup>,
    grid: GridImpedance,
    yg: RationalFunction,
    plants: Vec<Arc<PlantModel>>,
    /// group index -> plant index
    membership: Vec<usize>,
    delta: RationalFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Drive<'a> {
    OwnRef,
    GridVoltage,
    CrossRef(&'a str),
}

pub fn compose(groups: Vec<PlantGroup>, grid: &GridParams) -> Result<SystemModel> {
    let z = grid_impedance(grid)?;
    SystemModel::assemble(groups, z, &[])
}

impl SystemModel {
    fn assemble(groups: Vec<PlantGroup>, grid: GridImpedance, cache: &[Arc<PlantModel>]) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::input("system needs at least one inverter group"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for g in &groups {
            if !seen.insert(g.label.as_str()) {
                return Err(Error::input(format!("duplicate group label '{}'", g.label)));
            }
            if g.count == 0 {
                return Err(Error::input(format!("group '{}' has zero inverters", g.label)));
            }
        }
        let mut plants: Vec<Arc<PlantModel>> = Vec::new();
        let mut membership = Vec::with_capacity(groups.len());
        for g in &groups {
            if let Some(k) = plants.iter().position(|p| p.same_plant(&g.params, g.lt)) {
                membership.push(k);
                continue;
            }
            let plant = match cache.iter().find(|p| p.same_plant(&g.params, g.lt)) {
                Some(p) => Arc::clone(p),
                None => Arc::new(PlantModel::build(&g.params, g.lt).map_err(|e| e.context(&g.label))?),
            };
            membership.push(plants.len());
            plants.push(plant);
        }
        let yg = admittance_of(&grid);
        let mut model = Self { groups, grid, yg, plants, membership, delta: RationalFunction::constant(0.0) };
        model.delta = model.build_delta();
        Ok(model)
    }

    pub fn groups(&self) -> &[PlantGroup] {
        &self.groups
    }

    pub fn grid(&self) -> &GridImpedance {
        &self.grid
    }

    pub fn grid_admittance(&self) -> &RationalFunction {
        &self.yg
    }

    pub fn plants(&self) -> &[Arc<PlantModel>] {
        &self.plants
    }

    /// Inverters per distinct plant model.
    pub fn plant_counts(&self) -> Vec<f64> {
        let mut n = vec![0.0; self.plants.len()];
        for (g, &k) in self.groups.iter().zip(&self.membership) {
            n[k] += g.count as f64;
        }
        n
    }

    pub fn total_count(&self) -> u64 {
        self.groups.iter().map(|g| g.count as u64).sum()
    }

    pub fn delta(&self) -> &RationalFunction {
        &self.delta
    }

    fn group_index(&self, label: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.label == label)
            .ok_or_else(|| Error::input(format!("unknown group label '{label}'")))
    }

    pub fn group(&self, label: &str) -> Result<&PlantGroup> {
        Ok(&self.groups[self.group_index(label)?])
    }

    pub fn plant_of(&self, label: &str) -> Result<&Arc<PlantModel>> {
        Ok(&self.plants[self.membership[self.group_index(label)?]])
    }

    /// Same system with one group resized. Norton models are shared.
    pub fn with_count(&self, label: &str, count: u32) -> Result<Self> {
        let i = self.group_index(label)?;
        if count == 0 {
            return Err(Error::input(format!("group '{label}' has zero inverters")));
        }
        let mut out = self.clone();
        out.groups[i].count = count;
        out.delta = out.build_delta();
        Ok(out)
    }

    /// Same system with one group's inverter parameters replaced.
    pub fn with_params(&self, label: &str, params: InverterParams) -> Result<Self> {
        let i = self.group_index(label)?;
        let mut groups = self.groups.clone();
        groups[i].params = params;
        Self::assemble(groups, self.grid.clone(), &self.plants)
    }

    pub fn with_grid(&self, grid: &GridParams) -> Result<Self> {
        Self::assemble(self.groups.clone(), grid_impedance(grid)?, &self.plants)
    }

    // Δ = Σ N_k Y_k/L_k + 1/Z over the common denominator Z Π L_k.
    fn build_delta(&self) -> RationalFunction {
        let counts = self.plant_counts();
        let z = self.yg.den();
        let locals: Vec<&Polynomial> = self.plants.iter().map(|p| p.local_denominator()).collect();
        let prod_all = locals.iter().fold(Polynomial::one(), |acc, l| &acc * l);
        let num = &prod_all + &(z * &self.weighted_admittance_sum(&counts, None));
        RationalFunction::canonical(num, z * &prod_all)
    }

    // Σ_{k != skip} N_k Y_k Π_{j != k} L_j
    fn weighted_admittance_sum(&self, counts: &[f64], skip: Option<usize>) -> Polynomial {
        let mut sum = Polynomial::zero();
        for (k, plant) in self.plants.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let mut term = plant.norton.ypv.num().scale(counts[k]);
            for (j, other) in self.plants.iter().enumerate() {
                if j != k {
                    term = &term * other.local_denominator();
                }
            }
            sum = &sum + &term;
        }
        sum
    }

    /// One term of the grid-side current of `target`, assembled without
    /// cancellation.
    pub fn channel_tf(&self, target: &str, drive: Drive<'_>) -> Result<RationalFunction> {
        let i = self.group_index(target)?;
        let plant = &self.plants[self.membership[i]];
        let ypv = &plant.norton.ypv;
        let n_i = self.groups[i].count as f64;
        let ypv_over_delta = ypv.div(&self.delta)?;
        match drive {
            Drive::OwnRef => {
                let bracket = RationalFunction::constant(1.0).sub(&ypv_over_delta.scale(n_i));
                Ok(bracket.mul(&plant.norton.ipv_gain))
            }
            Drive::GridVoltage => Ok(ypv_over_delta.mul(&self.yg).neg()),
            Drive::CrossRef(other) => {
                let p = self.group_index(other)?;
                if p == i {
                    return Err(Error::input(format!(
                        "cross_ref of '{target}' onto itself; same-group coupling is part of own_ref"
                    )));
                }
                let n_p = self.groups[p].count as f64;
                let ipv_p = &self.plants[self.membership[p]].norton.ipv_gain;
                Ok(ypv_over_delta.scale(n_p).mul(ipv_p).neg())
            }
        }
    }

    /// State dimension of the group-reduced realization.
    pub fn state_dim(&self) -> usize {
        self.plants.iter().map(|p| p.state_dim()).sum()
    }

    /// Monic closed-loop characteristic polynomial.
    ///
    /// Candidate: `num(Δ) * Π_k L_k`. Each local denominator `L_k` also
    /// divides the numerator of group `k`'s own-reference channel, so its
    /// roots are deflated wherever that numerator vanishes to within
    /// [`DEFLATION_REL_TOL`]. The surviving degree must equal the state
    /// dimension of the realization.
    pub fn characteristic_polynomial(&self) -> Result<Polynomial> {
        let counts = self.plant_counts();
        let delta_num = self.delta.num();
        let z = self.yg.den();
        let prod_all = self.plants.iter().fold(Polynomial::one(), |acc, p| &acc * p.local_denominator());
        let mut out = delta_num.clone();
        for (k, plant) in self.plants.iter().enumerate() {
            let own_num = &prod_all + &(z * &self.weighted_admittance_sum(&counts, Some(k)));
            let surviving: Vec<Complex64> = plant
                .local_poles
                .iter()
                .copied()
                .filter(|&r| {
                    let scale = own_num.abs_eval(r);
                    scale == 0.0 || own_num.eval(r).norm() > DEFLATION_REL_TOL * scale
                })
                .collect();
            if !surviving.is_empty() {
                out = &out * &Polynomial::from_roots(&surviving);
            }
        }
        let expected = self.state_dim();
        if out.degree() != Some(expected) {
            return Err(Error::Diagnostic(format!(
                "characteristic polynomial has degree {:?} after deflation, realization has {expected} states",
                out.degree()
            )));
        }
        Ok(out.monic())
    }

    /// Counts keyed by label, for reporting.
    pub fn counts(&self) -> BTreeMap<String, u32> {
        self.groups.iter().map(|g| (g.label.clone(), g.count)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverter::split_winding_leakage;

    fn lt() -> f64 {
        split_winding_leakage(4.5, 270.0, 500e3, 100.0 * std::f64::consts::PI).unwrap()
    }

    fn group(label: &str, td_us: f64, count: u32) -> PlantGroup {
        PlantGroup::new(label, InverterParams::reference_500kw().with_td(td_us * 1e-6), lt(), count)
    }

    fn grid() -> GridParams {
        GridParams::ratings(GridRatings::reference_plant())
    }

    #[test]
    fn reference_grid_referral() {
        let z = grid_impedance(&grid()).unwrap();
        assert!((z.rg - 2.53e-5).abs() < 0.01e-5, "{}", z.rg);
        assert!((z.lg - 4.0e-6).abs() < 0.05e-6, "{}", z.lg);
        let t = &z.trace[0];
        assert!((t.x_ohm - 1.6667).abs() < 1e-3);
        assert!((z.trace[1].r_ohm - 4.2).abs() < 1e-12 && (z.trace[1].x_ohm - 6.8).abs() < 1e-12);
    }

    #[test]
    fn direct_grid_admittance() {
        let y = grid_admittance(&GridParams::direct(0.0, 5e-6)).unwrap();
        assert_eq!(y.num().coeffs(), &[1.0]);
        assert_eq!(y.den().coeffs(), &[0.0, 5e-6]);
    }

    #[test]
    fn degenerate_grid_rejected() {
        let mut r = GridRatings::reference_plant();
        r.length_km = 0.0;
        r.us_pct = 0.0;
        assert!(matches!(grid_admittance(&GridParams::ratings(r)), Err(Error::Domain(_))));
        assert!(grid_admittance(&GridParams::direct(-1.0, 1e-6)).is_err());
        assert!(grid_admittance(&GridParams::direct(0.0, 1e-6).with_lg_scale(0.0)).is_err());
    }

    #[test]
    fn lg_scale_multiplies_inductance() {
        let a = grid_impedance(&grid()).unwrap();
        let b = grid_impedance(&grid().with_lg_scale(2.0)).unwrap();
        assert!((b.lg - 2.0 * a.lg).abs() < 1e-20);
        assert_eq!(a.rg, b.rg);
    }

    #[test]
    fn compose_errors() {
        assert!(compose(vec![], &grid()).is_err());
        let dup = vec![group("a", 75.0, 2), group("a", 67.5, 2)];
        assert!(compose(dup, &grid()).is_err());
        assert!(compose(vec![group("a", 75.0, 0)], &grid()).is_err());
    }

    #[test]
    fn single_group_delta_matches_homogeneous_form() {
        let m = compose(vec![group("n", 75.0, 10)], &grid()).unwrap();
        let plant = m.plant_of("n").unwrap();
        let expected = plant.norton.ypv.scale(10.0).add(m.grid_admittance());
        assert!(m.delta().relative_difference(&expected) < 1e-12);
    }

    #[test]
    fn identical_groups_merge() {
        let one = compose(vec![group("a", 75.0, 7)], &grid()).unwrap();
        let two = compose(vec![group("a", 75.0, 3), group("b", 75.0, 4)], &grid()).unwrap();
        assert_eq!(two.plants().len(), 1);
        assert_eq!(one.delta(), two.delta());
        assert_eq!(one.characteristic_polynomial().unwrap(), two.characteristic_polynomial().unwrap());
    }

    #[test]
    fn delta_degree_bookkeeping() {
        let tds = [67.5, 72.0, 75.0, 79.5, 82.5];
        let groups = tds.iter().enumerate().map(|(i, &t)| group(&format!("N{}", i + 1), t, 2)).collect();
        let m = compose(groups, &grid()).unwrap();
        let local: usize = m.plants().iter().map(|p| p.local_denominator().degree().unwrap()).sum();
        assert_eq!(m.delta().den().degree(), Some(local + 1));
        assert_eq!(m.characteristic_polynomial().unwrap().degree(), Some(35));
    }

    #[test]
    fn cross_ref_on_self_rejected() {
        let m = compose(vec![group("a", 75.0, 2), group("b", 82.5, 2)], &grid()).unwrap();
        assert!(m.channel_tf("a", Drive::CrossRef("a")).is_err());
        assert!(m.channel_tf("zz", Drive::OwnRef).is_err());
        assert!(m.channel_tf("a", Drive::CrossRef("b")).is_ok());
    }

    #[test]
    fn with_count_reuses_plants() {
        let m = compose(vec![group("a", 75.0, 2), group("b", 82.5, 2)], &grid()).unwrap();
        let m2 = m.with_count("b", 40).unwrap();
        assert!(Arc::ptr_eq(&m.plants()[1], &m2.plants()[1]));
        let fresh = compose(vec![group("a", 75.0, 2), group("b", 82.5, 40)], &grid()).unwrap();
        assert_eq!(m2.delta(), fresh.delta());
        assert!(m.with_count("b", 0).is_err());
    }

    #[test]
    fn zero_delay_state_dimension() {
        let m = compose(vec![group("a", 0.0, 2)], &grid()).unwrap();
        assert_eq!(m.state_dim(), 5);
        assert_eq!(m.characteristic_polynomial().unwrap().degree(), Some(5));
    }
}
