//! Time-domain validation.
//!
//! Two models of the same plant:
//!
//! - [`run_linear`]: continuous state-space realization with the Padé delay,
//!   whose eigenvalues are the analysis poles.
//! - [`run_sampled`]: discrete PR controller executed once per sample, with
//!   the command held for one period after the computation delay.
//!
//! Both integrate the LCL plants with fixed-step RK4 and eliminate the PCC
//! voltage algebraically.

mod sampled;
mod statespace;

pub use sampled::run_sampled;
pub use statespace::{build_statespace, run_linear, SimPlant, SimUnit, StateSpace};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    PadeLinear,
    SampledData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: SimMode,
    /// s
    pub duration: f64,
    /// Integration steps per sampling period.
    pub substeps_per_ts: u32,
    /// Peak of the sinusoidal current reference, A.
    pub reference_amplitude: f64,
    /// Grid source RMS voltage, V.
    pub grid_rms: f64,
    /// s
    pub divergence_window: f64,
    pub divergence_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: SimMode::PadeLinear,
            duration: 0.5,
            substeps_per_ts: 10,
            reference_amplitude: 1.0,
            grid_rms: 156.0,
            divergence_window: 0.2,
            divergence_factor: 10.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::input(format!("duration must be positive, got {}", self.duration)));
        }
        if self.substeps_per_ts < 4 {
            return Err(Error::input(format!("substeps_per_ts must be at least 4, got {}", self.substeps_per_ts)));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::input(format!("divergence_factor must exceed 1, got {}", self.divergence_factor)));
        }
        if !(self.divergence_window > 0.0) {
            return Err(Error::input("divergence_window must be positive"));
        }
        if !(self.reference_amplitude.is_finite() && self.grid_rms.is_finite()) {
            return Err(Error::input("non-finite source amplitude"));
        }
        Ok(())
    }
}

/// Sampled once per control period.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// Grid-side current of one inverter of each unit, `currents[unit][k]`.
    pub currents: Vec<Vec<f64>>,
    pub pcc_voltage: Vec<f64>,
    /// Time of the first non-finite state, after which the run stopped.
    pub diverged_at: Option<f64>,
}

impl Waveform {
    fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self { times: Vec::new(), labels, currents: vec![Vec::new(); n], pcc_voltage: Vec::new(), diverged_at: None }
    }

    fn push(&mut self, t: f64, currents: impl Iterator<Item = f64>, v: f64) {
        self.times.push(t);
        for (col, i) in self.currents.iter_mut().zip(currents) {
            col.push(i);
        }
        self.pcc_voltage.push(v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimVerdict {
    Stable,
    Unstable,
    /// The waveform is identically zero; nothing to judge.
    Indeterminate,
}

/// Unstable iff some unit's RMS current over the final window exceeds
/// `divergence_factor` times its RMS over the window before, or the run
/// diverged.
pub fn detect_stability(w: &Waveform, cfg: &SimConfig) -> Result<SimVerdict> {
    let t_end = match w.times.last() {
        Some(&t) => t,
        None => return Err(Error::input("empty waveform")),
    };
    if w.diverged_at.is_some() || w.currents.iter().flatten().any(|x| !x.is_finite()) {
        return Ok(SimVerdict::Unstable);
    }
    let win = cfg.divergence_window;
    let t0 = w.times[0];
    if t_end - t0 + 1e-12 < 2.0 * win {
        return Err(Error::input(format!(
            "waveform spans {} s, detection needs twice the {win} s window",
            t_end - t0
        )));
    }
    if w.currents.iter().flatten().all(|&x| x == 0.0) {
        return Ok(SimVerdict::Indeterminate);
    }
    let rms = |col: &[f64], lo: f64, hi: f64| {
        let (sum, n) = w
            .times
            .iter()
            .zip(col)
            .filter(|(t, _)| **t > lo && **t <= hi)
            .fold((0.0, 0usize), |(s, n), (_, x)| (s + x * x, n + 1));
        if n == 0 { 0.0 } else { (sum / n as f64).sqrt() }
    };
    let unstable = w.currents.iter().any(|col| {
        let last = rms(col, t_end - win, t_end);
        let base = rms(col, t_end - 2.0 * win, t_end - win);
        last > cfg.divergence_factor * base
    });
    Ok(if unstable { SimVerdict::Unstable } else { SimVerdict::Stable })
}

/// Classic fourth-order Runge-Kutta step of `x' = f(t, x)`.
pub(crate) fn rk4_step(
    x: &mut [f64],
    t: f64,
    h: f64,
    scratch: &mut [Vec<f64>; 5],
    f: &mut impl FnMut(f64, &[f64], &mut [f64]),
) {
    let n = x.len();
    let [k1, k2, k3, k4, tmp] = scratch;
    f(t, x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(t + h, tmp, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

pub(crate) fn scratch(n: usize) -> [Vec<f64>; 5] {
    std::array::from_fn(|_| vec![0.0; n])
}
