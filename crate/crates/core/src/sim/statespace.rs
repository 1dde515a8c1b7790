use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{rk4_step, scratch, SimConfig, Waveform};
use crate::error::{Error, Result};
use crate::inverter::InverterParams;
use crate::system::SystemModel;
use crate::tf::eigenvalues;

/// One simulated inverter standing for `count` identical ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SimUnit {
    pub label: String,
    pub params: InverterParams,
    pub lt: f64,
    pub count: u32,
}

impl SimUnit {
    fn delayed(&self) -> bool {
        self.params.total_delay() > 0.0
    }

    /// `[i1, uC, i2, xr1, xr2]` plus `[z1, z2]` with a nonzero delay.
    pub fn state_dim(&self) -> usize {
        if self.delayed() { 7 } else { 5 }
    }

    pub(crate) fn lb(&self) -> f64 {
        self.params.l2 + self.lt
    }
}

/// Units sharing one PCC behind the grid impedance `rg + lg s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPlant {
    pub units: Vec<SimUnit>,
    pub rg: f64,
    pub lg: f64,
}

impl SimPlant {
    pub fn new(units: Vec<SimUnit>, rg: f64, lg: f64) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::input("simulation needs at least one unit"));
        }
        if !(rg >= 0.0 && lg >= 0.0 && rg.is_finite() && lg.is_finite()) {
            return Err(Error::input(format!("invalid grid impedance rg = {rg}, lg = {lg}")));
        }
        let ts = units[0].params.ts;
        let omega0 = units[0].params.omega0;
        let mut units = units;
        for u in units.iter_mut() {
            u.params.validate().map_err(|e| e.context(&u.label))?;
            u.params = u.params.normalized();
            if u.count == 0 {
                return Err(Error::input(format!("unit '{}' has zero inverters", u.label)));
            }
            if !(u.lt >= 0.0 && u.lb() > 0.0) {
                return Err(Error::input(format!("unit '{}': branch inductance must be positive", u.label)));
            }
            if u.params.ts != ts || u.params.omega0 != omega0 {
                return Err(Error::input("all units must share sampling period and fundamental frequency"));
            }
        }
        Ok(Self { units, rg, lg })
    }

    /// One unit per distinct plant model of `m`, labelled with the joined
    /// labels of its groups.
    pub fn from_model(m: &SystemModel) -> Result<Self> {
        let counts = m.plant_counts();
        let units = m
            .plants()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let label = m
                    .groups()
                    .iter()
                    .filter(|g| std::sync::Arc::ptr_eq(m.plant_of(&g.label).unwrap(), p))
                    .map(|g| g.label.as_str())
                    .collect::<Vec<_>>()
                    .join("+");
                SimUnit { label, params: p.params.clone(), lt: p.lt, count: counts[k] as u32 }
            })
            .collect();
        Self::new(units, m.grid().rg, m.grid().lg)
    }

    pub fn ts(&self) -> f64 {
        self.units[0].params.ts
    }

    pub fn omega0(&self) -> f64 {
        self.units[0].params.omega0
    }

    pub fn labels(&self) -> Vec<String> {
        self.units.iter().map(|u| u.label.clone()).collect()
    }

    /// PCC voltage from the node constraint `i_g = Σ N_k i2_k` with
    /// `i2_k' = (uC_k - v) / Lb_k` and `v = u_g + Rg i_g + Lg i_g'`.
    pub(crate) fn pcc_voltage(&self, uc: impl Iterator<Item = f64>, i2: impl Iterator<Item = f64>, ug: f64) -> f64 {
        let (mut s_n, mut s_uc, mut s_i2) = (0.0, 0.0, 0.0);
        for ((u, c), i) in self.units.iter().zip(uc).zip(i2) {
            let n = u.count as f64;
            s_n += n / u.lb();
            s_uc += n * c / u.lb();
            s_i2 += n * i;
        }
        (ug + self.rg * s_i2 + self.lg * s_uc) / (1.0 + self.lg * s_n)
    }
}

/// `x' = A x + b_ref i* + b_grid u_g`, `v_pcc = c_v x + d_v u_g`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub plant: SimPlant,
    /// First state of each unit.
    pub offsets: Vec<usize>,
    pub a: DMatrix<f64>,
    pub b_ref: DVector<f64>,
    pub b_grid: DVector<f64>,
    pub c_v: DVector<f64>,
    pub d_v: f64,
}

// Right-hand side of the Padé model; linear in (x, i*, u_g).
fn rates(plant: &SimPlant, offsets: &[usize], x: &[f64], iref: f64, ug: f64, dx: &mut [f64]) -> f64 {
    let v = plant.pcc_voltage(
        offsets.iter().map(|&o| x[o + 1]),
        offsets.iter().map(|&o| x[o + 2]),
        ug,
    );
    for (u, &o) in plant.units.iter().zip(offsets) {
        let p = &u.params;
        let (i1, uc, i2, xr1, xr2) = (x[o], x[o + 1], x[o + 2], x[o + 3], x[o + 4]);
        let e = iref - i2;
        let m = p.kp * e + 2.0 * p.kr * p.omega_i * xr2 - p.kd * (i1 - i2);
        let y = if u.delayed() {
            let td = p.total_delay();
            let (z1, z2) = (x[o + 5], x[o + 6]);
            dx[o + 5] = z2;
            dx[o + 6] = -12.0 / (td * td) * z1 - 6.0 / td * z2 + m;
            m - 12.0 / td * z2
        } else {
            m
        };
        dx[o] = (p.k_pwm() * y - uc) / p.l1;
        dx[o + 1] = (i1 - i2) / p.cf;
        dx[o + 2] = (uc - v) / u.lb();
        dx[o + 3] = xr2;
        dx[o + 4] = -p.omega0 * p.omega0 * xr1 - 2.0 * p.omega_i * xr2 + e;
    }
    v
}

pub fn build_statespace(plant: &SimPlant) -> Result<StateSpace> {
    let mut offsets = Vec::with_capacity(plant.units.len());
    let mut n = 0;
    for u in &plant.units {
        offsets.push(n);
        n += u.state_dim();
    }
    let mut a = DMatrix::zeros(n, n);
    let mut c_v = DVector::zeros(n);
    let mut x = vec![0.0; n];
    let mut dx = vec![0.0; n];
    for j in 0..n {
        x[j] = 1.0;
        c_v[j] = rates(plant, &offsets, &x, 0.0, 0.0, &mut dx);
        a.set_column(j, &DVector::from_column_slice(&dx));
        x[j] = 0.0;
    }
    rates(plant, &offsets, &x, 1.0, 0.0, &mut dx);
    let b_ref = DVector::from_column_slice(&dx);
    let d_v = rates(plant, &offsets, &x, 0.0, 1.0, &mut dx);
    let b_grid = DVector::from_column_slice(&dx);
    Ok(StateSpace { plant: plant.clone(), offsets, a, b_ref, b_grid, c_v, d_v })
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        eigenvalues(self.a.clone())
    }
}

/// Fixed-step RK4 on the Padé model, sampled once per control period.
pub fn run_linear(ss: &StateSpace, cfg: &SimConfig) -> Result<Waveform> {
    cfg.validate()?;
    let n = ss.dim();
    let ts = ss.plant.ts();
    let w0 = ss.plant.omega0();
    let h = ts / cfg.substeps_per_ts as f64;
    let periods = (cfg.duration / ts).round() as usize;
    let amp = cfg.reference_amplitude;
    let ug_peak = cfg.grid_rms * std::f64::consts::SQRT_2;

    // row-major copies for the inner loop
    let a: Vec<f64> = ss.a.transpose().iter().copied().collect();
    let (b_ref, b_grid) = (ss.b_ref.as_slice(), ss.b_grid.as_slice());
    let mut f = |t: f64, x: &[f64], dx: &mut [f64]| {
        let s = (w0 * t).sin();
        let (iref, ug) = (amp * s, ug_peak * s);
        for (i, d) in dx.iter_mut().enumerate() {
            let row = &a[i * n..(i + 1) * n];
            *d = row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() + b_ref[i] * iref + b_grid[i] * ug;
        }
    };

    let mut w = Waveform::new(ss.plant.labels());
    let mut x = vec![0.0; n];
    let mut s = scratch(n);
    let record = |w: &mut Waveform, t: f64, x: &[f64]| {
        let v = ss.c_v.as_slice().iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + ss.d_v * ug_peak * (w0 * t).sin();
        w.push(t, ss.offsets.iter().map(|&o| x[o + 2]), v);
    };
    record(&mut w, 0.0, &x);
    for k in 0..periods {
        let t0 = k as f64 * ts;
        for j in 0..cfg.substeps_per_ts {
            rk4_step(&mut x, t0 + j as f64 * h, h, &mut s, &mut f);
        }
        let t = (k + 1) as f64 * ts;
        if x.iter().any(|v| !v.is_finite()) {
            w.diverged_at = Some(t);
            break;
        }
        record(&mut w, t, &x);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverter::split_winding_leakage;

    fn unit(label: &str, td_us: f64, count: u32) -> SimUnit {
        let lt = split_winding_leakage(4.5, 270.0, 500e3, 100.0 * std::f64::consts::PI).unwrap();
        SimUnit { label: label.into(), params: InverterParams::reference_500kw().with_td(td_us * 1e-6), lt, count }
    }

    #[test]
    fn state_dimension_bookkeeping() {
        let p = SimPlant::new(vec![unit("a", 75.0, 2), unit("b", 82.5, 3), unit("c", 0.0, 1)], 2.5e-5, 4e-6).unwrap();
        let ss = build_statespace(&p).unwrap();
        assert_eq!(ss.dim(), 19);
        assert_eq!(ss.offsets, vec![0, 7, 14]);
    }

    #[test]
    fn zero_inputs_stay_at_rest() {
        let p = SimPlant::new(vec![unit("a", 75.0, 10)], 2.5e-5, 4e-6).unwrap();
        let ss = build_statespace(&p).unwrap();
        let cfg = SimConfig { reference_amplitude: 0.0, grid_rms: 0.0, duration: 0.01, ..Default::default() };
        let w = run_linear(&ss, &cfg).unwrap();
        assert!(w.currents[0].iter().all(|&x| x == 0.0));
        assert!(w.pcc_voltage.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_plants() {
        assert!(SimPlant::new(vec![], 0.0, 1e-6).is_err());
        assert!(SimPlant::new(vec![unit("a", 75.0, 0)], 0.0, 1e-6).is_err());
        let mut u = unit("a", 75.0, 1);
        u.params.l2 = 0.0;
        u.lt = 0.0;
        assert!(SimPlant::new(vec![u], 0.0, 1e-6).is_err());
    }
}
