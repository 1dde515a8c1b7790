//! Single-inverter current loop.
//!
//! Grid-side current control of an LCL-filtered inverter with a
//! proportional-resonant controller, capacitor-current active damping and a
//! lumped digital delay (computation plus PWM hold), plus its Norton
//! equivalent as seen through the split-winding transformer leakage `LT`.
//!
//! Plant and control law, with `Gs = k_pwm * Gd`:
//!
//! ```text
//! L1 i1' = u_inv - uC      Cf uC' = i1 - i2      L2 i2' = uC - u
//! u_inv  = Gs (Gc (i* - i2) - kd iC),   iC = i1 - i2
//! ```
//!
//! Eliminating `i1`, `uC`, `iC` gives `i2 = G i* - Yeq u` with
//!
//! ```text
//! D   = L1 s^3 + kd Gs s^2 + L1 w_res^2 s + Gs Gc w_r^2
//! G   = Gs Gc w_r^2 / D
//! Yeq = ((L1/L2) s^2 + (kd Gs / L2) s + w_r^2) / D
//! ```
//!
//! where `w_r^2 = 1/(L2 Cf)` and `w_res^2 = (L1+L2)/(L1 L2 Cf)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tf::{pade_delay, poly_roots, Polynomial, RationalFunction, DEFAULT_POLISH_ITERS};

/// Physical and control parameters of one inverter. SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct InverterParams {
    pub kp: f64,
    /// Resonant gain; zero leaves a pure proportional controller.
    pub kr: f64,
    /// Capacitor-current feedback gain; zero disables active damping.
    pub kd: f64,
    pub omega0: f64,
    /// Resonant cutoff of the PR controller.
    pub omega_i: f64,
    pub vdc: f64,
    pub l1: f64,
    pub l2: f64,
    pub cf: f64,
    pub ts: f64,
    /// Explicit total loop delay. When `None` the delay is
    /// `(lambda + 0.5) * ts`.
    pub td: Option<f64>,
    pub lambda: f64,
    /// Switching frequency in Hz. Carried for reporting only.
    pub fsw: f64,
}

impl InverterParams {
    /// The 500 kW inverter used throughout the reference study.
    pub fn reference_500kw() -> Self {
        Self {
            kp: 0.001,
            kr: 1.0,
            kd: 0.0017,
            omega0: 100.0 * PI,
            omega_i: PI,
            vdc: 553.0,
            l1: 90e-6,
            l2: 18e-6,
            cf: 182e-6,
            ts: 50e-6,
            td: None,
            lambda: 1.0,
            fsw: 10e3,
        }
    }

    pub fn with_td(mut self, td: f64) -> Self {
        self.td = Some(td);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [("kr", self.kr), ("kd", self.kd)];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be non-negative, got {v}")));
            }
        }
        let positive = [
            ("kp", self.kp),
            ("omega0", self.omega0),
            ("omega_i", self.omega_i),
            ("vdc", self.vdc),
            ("l1", self.l1),
            ("l2", self.l2),
            ("cf", self.cf),
            ("ts", self.ts),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(td) = self.td {
            if !(td >= 0.0 && td.is_finite()) {
                return Err(Error::input(format!("td must be non-negative, got {td}")));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::input(format!("lambda must lie in (0, 1], got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn k_pwm(&self) -> f64 {
        self.vdc / 2.0
    }

    /// `1/sqrt(L2 Cf)`
    pub fn omega_r(&self) -> f64 {
        (1.0 / (self.l2 * self.cf)).sqrt()
    }

    /// `sqrt((L1+L2)/(L1 L2 Cf))`
    pub fn omega_res(&self) -> f64 {
        ((self.l1 + self.l2) / (self.l1 * self.l2 * self.cf)).sqrt()
    }

    pub fn total_delay(&self) -> f64 {
        self.td.unwrap_or((self.lambda + 0.5) * self.ts)
    }

    /// Same parameters with the delay pinned to its effective value, so two
    /// descriptions of the same loop compare equal.
    pub fn normalized(&self) -> Self {
        let mut p = self.clone();
        p.td = Some(self.total_delay());
        p
    }
}

/// Closed current loop of one inverter: `i2 = G i* - Yeq u`.
/// `g` and `yeq` share one denominator, coefficient for coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct InverterChannelModel {
    pub g: RationalFunction,
    pub yeq: RationalFunction,
}

impl InverterChannelModel {
    pub fn denominator(&self) -> &Polynomial {
        self.g.den()
    }
}

/// Norton equivalent behind the transformer leakage `lt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NortonModel {
    /// Source current per unit reference current.
    pub ipv_gain: RationalFunction,
    pub ypv: RationalFunction,
    pub lt: f64,
}

impl NortonModel {
    /// Local closed-loop denominator `D + LT s Yeq_num` (both cleared).
    pub fn local_denominator(&self) -> &Polynomial {
        self.ypv.den()
    }
}

/// `kp + 2 kr wi s / (s^2 + 2 wi s + w0^2)`
pub fn build_controller(p: &InverterParams) -> RationalFunction {
    let (num, den) = controller_parts(p);
    RationalFunction::canonical(num, den)
}

fn controller_parts(p: &InverterParams) -> (Polynomial, Polynomial) {
    let den = Polynomial::new(vec![p.omega0 * p.omega0, 2.0 * p.omega_i, 1.0]);
    let num = &den.scale(p.kp) + &Polynomial::monomial(2.0 * p.kr * p.omega_i, 1);
    (num, den)
}

/// Padé model of the total loop delay.
pub fn build_delay_chain(p: &InverterParams) -> Result<RationalFunction> {
    pade_delay(p.total_delay())
}

/// `G` and `Yeq` as rationals over the common denominator `D`.
///
/// `Gs = k_pwm pn/pd` and `Gc = cn/cd` are rational, so `D` is cleared by
/// `pd cd`; the same factor then drops out of both numerators.
pub fn build_channel_model(p: &InverterParams) -> Result<InverterChannelModel> {
    p.validate()?;
    let (pn, pd) = build_delay_chain(p)?.into_parts();
    let (cn, cd) = controller_parts(p);
    let kpwm = p.k_pwm();
    let wr2 = 1.0 / (p.l2 * p.cf);
    let wres2 = (p.l1 + p.l2) / (p.l1 * p.l2 * p.cf);
    let pdcd = &pd * &cd;

    let d = [
        pdcd.shift(3).scale(p.l1),
        (&pn * &cd).shift(2).scale(p.kd * kpwm),
        pdcd.shift(1).scale(p.l1 * wres2),
        (&pn * &cn).scale(kpwm * wr2),
    ]
    .into_iter()
    .fold(Polynomial::zero(), |acc, t| acc + t);

    let g_num = (&pn * &cn).scale(kpwm * wr2);
    let y_inner = [
        pd.shift(2).scale(p.l1 / p.l2),
        pn.shift(1).scale(p.kd * kpwm / p.l2),
        pd.scale(wr2),
    ]
    .into_iter()
    .fold(Polynomial::zero(), |acc, t| acc + t);
    let y_num = &y_inner * &cd;

    Ok(InverterChannelModel {
        g: RationalFunction::new(g_num, d.clone())?,
        yeq: RationalFunction::new(y_num, d)?,
    })
}

/// `ipv = G / (Yeq LT s + 1)`, `Ypv = Yeq / (Yeq LT s + 1)`.
///
/// `G` and `Yeq` share `D`, so both reduce to `num / (D + LT s Yeq_num)`.
pub fn build_norton(m: &InverterChannelModel, lt: f64) -> Result<NortonModel> {
    if !(lt > 0.0 && lt.is_finite()) {
        return Err(Error::input(format!("transformer leakage must be positive, got {lt}")));
    }
    let local = m.denominator() + &m.yeq.num().shift(1).scale(lt);
    Ok(NortonModel {
        ipv_gain: RationalFunction::new(m.g.num().clone(), local.clone())?,
        ypv: RationalFunction::new(m.yeq.num().clone(), local)?,
        lt,
    })
}

/// Leakage inductance of one low-voltage winding from its short-circuit
/// impedance: `(uz * U^2 / S) / omega0`.
pub fn split_winding_leakage(uz_pct: f64, u_lv: f64, s_winding: f64, omega0: f64) -> Result<f64> {
    for (name, v) in [("uz_pct", uz_pct), ("u_lv", u_lv), ("s_winding", s_winding), ("omega0", omega0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::input(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(uz_pct / 100.0 * u_lv * u_lv / s_winding / omega0)
}

/// Result of a delay-margin search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayMargin {
    /// Smallest delay with a closed-loop pole on or right of the imaginary
    /// axis, to within `tolerance` seconds.
    Crossing { td: f64, tolerance: f64 },
    StableThroughout { upper: f64 },
}

impl DelayMargin {
    pub fn td(&self) -> Option<f64> {
        match *self {
            DelayMargin::Crossing { td, .. } => Some(td),
            DelayMargin::StableThroughout { .. } => None,
        }
    }
}

pub const MARGIN_BISECTION_TOL: f64 = 0.01e-6;

/// Poles of the single inverter's source channel at delay `td`.
///
/// With `lt = Some(x)` the channel is the Norton source `ipv_gain` behind
/// the leakage; with `None` it is `G` itself.
pub fn source_channel_poles(p: &InverterParams, lt: Option<f64>, td: f64) -> Result<Vec<Complex64>> {
    let model = build_channel_model(&p.clone().with_td(td))?;
    let den = match lt {
        Some(lt) => build_norton(&model, lt)?.local_denominator().clone(),
        None => model.denominator().clone(),
    };
    Ok(poly_roots(&den, DEFAULT_POLISH_ITERS)?.values)
}

fn unstable_at(p: &InverterParams, lt: Option<f64>, td: f64) -> Result<bool> {
    let poles = source_channel_poles(p, lt, td)?;
    Ok(poles.iter().any(|r| r.re >= 0.0))
}

/// Sweep the loop delay over `range` with `step`, then bisect the first
/// crossing down to 0.01 μs.
pub fn delay_margin(
    p: &InverterParams,
    lt: Option<f64>,
    range: (f64, f64),
    step: f64,
) -> Result<DelayMargin> {
    p.validate()?;
    let (lo, hi) = range;
    if !(step > 0.0) {
        return Err(Error::input(format!("delay step must be positive, got {step}")));
    }
    if !(lo >= 0.0 && lo <= hi && hi <= 5.0 * p.ts * (1.0 + 1e-12)) {
        return Err(Error::input(format!(
            "delay range [{lo}, {hi}] must lie within [0, 5 Ts] = [0, {}]",
            5.0 * p.ts
        )));
    }
    if unstable_at(p, lt, lo)? {
        return Ok(DelayMargin::Crossing { td: lo, tolerance: 0.0 });
    }
    let steps = ((hi - lo) / step).ceil() as usize;
    let mut prev = lo;
    for k in 1..=steps {
        let td = (lo + k as f64 * step).min(hi);
        if unstable_at(p, lt, td)? {
            let (mut a, mut b) = (prev, td);
            while b - a > MARGIN_BISECTION_TOL {
                let mid = 0.5 * (a + b);
                if unstable_at(p, lt, mid)? {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(DelayMargin::Crossing { td: b, tolerance: MARGIN_BISECTION_TOL });
        }
        prev = td;
    }
    Ok(DelayMargin::StableThroughout { upper: hi })
}
