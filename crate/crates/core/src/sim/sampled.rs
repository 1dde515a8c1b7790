use super::statespace::SimPlant;
use super::{rk4_step, scratch, SimConfig, Waveform};
use crate::error::{Error, Result};
use crate::inverter::InverterParams;

/// Resonant part of the PR controller, trapezoidal rule prewarped at `omega0`,
/// in transposed direct form II.
#[derive(Debug, Clone)]
struct ResonantFilter {
    b: [f64; 3],
    a: [f64; 2],
    z: [f64; 2],
}

impl ResonantFilter {
    fn new(p: &InverterParams) -> Self {
        let k = p.omega0 / (p.omega0 * p.ts / 2.0).tan();
        let (w0, wi) = (p.omega0, p.omega_i);
        let a0 = k * k + 2.0 * wi * k + w0 * w0;
        let a1 = 2.0 * (w0 * w0 - k * k);
        let a2 = k * k - 2.0 * wi * k + w0 * w0;
        let g = 2.0 * p.kr * wi * k;
        Self { b: [g / a0, 0.0, -g / a0], a: [a1 / a0, a2 / a0], z: [0.0; 2] }
    }

    fn step(&mut self, e: f64) -> f64 {
        let y = self.b[0] * e + self.z[0];
        self.z[0] = self.b[1] * e - self.a[0] * y + self.z[1];
        self.z[1] = self.b[2] * e - self.a[1] * y;
        y
    }
}

/// Where the command computed at sample `k` takes effect: period
/// `k + whole`, at offset `frac` into it.
#[derive(Debug, Clone, Copy)]
struct Actuation {
    whole: usize,
    frac: f64,
}

fn actuation(p: &InverterParams) -> Result<Actuation> {
    let ts = p.ts;
    let shift = p.total_delay() - 0.5 * ts;
    if shift < -1e-9 * ts {
        return Err(Error::input(format!(
            "sampled mode needs a delay of at least half a sample ({} s), got {} s",
            0.5 * ts,
            p.total_delay()
        )));
    }
    let shift = shift.max(0.0);
    let mut whole = (shift / ts).floor();
    let mut frac = shift - whole * ts;
    if frac > ts * (1.0 - 1e-9) {
        whole += 1.0;
        frac = 0.0;
    }
    if frac < ts * 1e-9 {
        frac = 0.0;
    }
    Ok(Actuation { whole: whole as usize, frac })
}

/// Sampled-data run: the controller samples `i2` and `iC` synchronously at
/// every `Ts`, and its output is applied `Td - Ts/2` later and held for one
/// period, so sample-and-hold adds the remaining `Ts/2` of average delay.
/// The plant is integrated with RK4 between actuation instants.
pub fn run_sampled(plant: &SimPlant, cfg: &SimConfig) -> Result<Waveform> {
    cfg.validate()?;
    let units = &plant.units;
    let nu = units.len();
    let ts = plant.ts();
    let w0 = plant.omega0();
    let acts: Vec<Actuation> = units.iter().map(|u| actuation(&u.params)).collect::<Result<_>>()?;
    let mut filters: Vec<ResonantFilter> = units.iter().map(|u| ResonantFilter::new(&u.params)).collect();

    let mut cuts: Vec<f64> = acts.iter().map(|a| a.frac).filter(|&f| f > 0.0).collect();
    cuts.extend([0.0, ts]);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let periods = (cfg.duration / ts).round() as usize;
    let amp = cfg.reference_amplitude;
    let ug_peak = cfg.grid_rms * std::f64::consts::SQRT_2;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(periods);
    let mut held = vec![0.0; nu];
    let mut x = vec![0.0; 3 * nu];
    let mut s = scratch(3 * nu);

    let pcc = |x: &[f64], ug: f64| plant.pcc_voltage((0..nu).map(|j| x[3 * j + 1]), (0..nu).map(|j| x[3 * j + 2]), ug);
    let mut w = Waveform::new(plant.labels());
    w.push(0.0, (0..nu).map(|j| x[3 * j + 2]), pcc(&x, 0.0));

    for k in 0..periods {
        let tk = k as f64 * ts;
        let iref = amp * (w0 * tk).sin();
        let cmd: Vec<f64> = units
            .iter()
            .zip(filters.iter_mut())
            .enumerate()
            .map(|(j, (u, f))| {
                let p = &u.params;
                let (i1, i2) = (x[3 * j], x[3 * j + 2]);
                let e = iref - i2;
                let m = p.kp * e + f.step(e) - p.kd * (i1 - i2);
                p.k_pwm() * m
            })
            .collect();
        history.push(cmd);

        for win in cuts.windows(2) {
            let (ta, tb) = (win[0], win[1]);
            for (j, a) in acts.iter().enumerate() {
                let lag = a.whole + usize::from(ta < a.frac);
                held[j] = k.checked_sub(lag).map_or(0.0, |i| history[i][j]);
            }
            let steps = ((tb - ta) / ts * cfg.substeps_per_ts as f64).ceil().max(1.0) as usize;
            let h = (tb - ta) / steps as f64;
            let mut f = |t: f64, x: &[f64], dx: &mut [f64]| {
                let v = pcc(x, ug_peak * (w0 * t).sin());
                for (j, u) in units.iter().enumerate() {
                    let p = &u.params;
                    let (i1, uc, i2) = (x[3 * j], x[3 * j + 1], x[3 * j + 2]);
                    dx[3 * j] = (held[j] - uc) / p.l1;
                    dx[3 * j + 1] = (i1 - i2) / p.cf;
                    dx[3 * j + 2] = (uc - v) / u.lb();
                }
            };
            for i in 0..steps {
                rk4_step(&mut x, tk + ta + i as f64 * h, h, &mut s, &mut f);
            }
        }

        let t = (k + 1) as f64 * ts;
        if x.iter().any(|v| !v.is_finite()) {
            w.diverged_at = Some(t);
            break;
        }
        w.push(t, (0..nu).map(|j| x[3 * j + 2]), pcc(&x, ug_peak * (w0 * t).sin()));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonant_filter_peaks_at_fundamental() {
        let p = InverterParams::reference_500kw();
        let f = ResonantFilter::new(&p);
        let z = num_complex::Complex64::from_polar(1.0, p.omega0 * p.ts);
        let h = (f.b[0] * z * z + f.b[2]) / (z * z + f.a[0] * z + f.a[1]);
        // continuous gain at omega0 is exactly kr; prewarping keeps it there
        assert!((h.re - p.kr).abs() < 1e-9 * p.kr.max(1.0) && h.im.abs() < 1e-9, "{h}");
    }

    #[test]
    fn actuation_offsets() {
        let p = InverterParams::reference_500kw();
        let a = actuation(&p.clone().with_td(75e-6)).unwrap();
        assert_eq!((a.whole, a.frac), (1, 0.0));
        let a = actuation(&p.clone().with_td(82.5e-6)).unwrap();
        assert_eq!(a.whole, 1);
        assert!((a.frac - 7.5e-6).abs() < 1e-15);
        let a = actuation(&p.clone().with_td(67.5e-6)).unwrap();
        assert_eq!(a.whole, 0);
        assert!((a.frac - 42.5e-6).abs() < 1e-15);
        assert!(actuation(&p.with_td(10e-6)).is_err());
    }
}
