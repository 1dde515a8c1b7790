#![allow(dead_code)]

use std::f64::consts::PI;

use hostcap::inverter::{split_winding_leakage, InverterParams};
use hostcap::system::{compose, GridParams, GridRatings, PlantGroup, SystemModel};
use hostcap::tf::{Polynomial, RationalFunction};

pub const OMEGA0: f64 = 100.0 * PI;

/// Grid inductance multiplier of the shipped default profile.
pub const LG_SCALE: f64 = 9.4;

pub fn leakage() -> f64 {
    split_winding_leakage(4.5, 270.0, 500e3, OMEGA0).unwrap()
}

pub fn params(td_us: f64) -> InverterParams {
    InverterParams::reference_500kw().with_td(td_us * 1e-6)
}

pub fn group(label: &str, td_us: f64, count: u32) -> PlantGroup {
    PlantGroup::new(label, params(td_us), leakage(), count)
}

pub fn grid() -> GridParams {
    GridParams::ratings(GridRatings::reference_plant()).with_lg_scale(LG_SCALE)
}

pub fn system(groups: &[(&str, f64, u32)]) -> SystemModel {
    compose(groups.iter().map(|&(l, td, n)| group(l, td, n)).collect(), &grid()).unwrap()
}

pub fn margin_tol() -> f64 {
    1e-3 * OMEGA0
}

fn p(c: &[f64]) -> Polynomial {
    Polynomial::new(c.to_vec())
}

/// Determinant by cofactor expansion along the first row.
pub fn det(m: &[Vec<Polynomial>]) -> Polynomial {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = Polynomial::zero();
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<Polynomial>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, x)| x.clone()).collect())
            .collect();
        let term = &m[0][j] * &det(&minor);
        acc = if j % 2 == 0 { &acc + &term } else { &acc - &term };
    }
    acc
}

/// Single-inverter current loop solved from its raw branch equations by
/// Cramer's rule, unknowns `[i1, uC, i2, u_inv]`:
///
/// ```text
/// L1 s i1 + uC - u_inv                          = 0
/// -i1 + Cf s uC + i2                            = 0
/// -uC + L2 s i2                                 = -u
/// kw kd pn cd i1 + kw pn (cn - kd cd) i2 + pd cd u_inv = kw pn cn i*
/// ```
///
/// with `Gc = cn/cd`, delay `pn/pd`, `kw` the PWM gain. Returns `(G, Yeq)`
/// with `i2 = G i* - Yeq u`.
pub fn loop_by_elimination(par: &InverterParams) -> (RationalFunction, RationalFunction) {
    let td = par.total_delay();
    let (pn, pd) = if td > 0.0 {
        (p(&[12.0, -6.0 * td, td * td]), p(&[12.0, 6.0 * td, td * td]))
    } else {
        (p(&[1.0]), p(&[1.0]))
    };
    let cd = p(&[par.omega0 * par.omega0, 2.0 * par.omega_i, 1.0]);
    let cn = &cd.scale(par.kp) + &p(&[0.0, 2.0 * par.kr * par.omega_i]);
    let kw = par.vdc / 2.0;
    let zero = Polynomial::zero;
    let one = || p(&[1.0]);
    let row4 = vec![
        (&pn * &cd).scale(kw * par.kd),
        zero(),
        &(&pn * &cn).scale(kw) - &(&pn * &cd).scale(kw * par.kd),
        &pd * &cd,
    ];
    let m = vec![
        vec![p(&[0.0, par.l1]), one(), zero(), one().scale(-1.0)],
        vec![one().scale(-1.0), p(&[0.0, par.cf]), one(), zero()],
        vec![zero(), one().scale(-1.0), p(&[0.0, par.l2]), zero()],
        row4,
    ];
    let den = det(&m);
    let solve_i2 = |rhs: [Polynomial; 4]| {
        let mut mm = m.clone();
        for (row, r) in mm.iter_mut().zip(rhs) {
            row[2] = r;
        }
        det(&mm)
    };
    let g_num = solve_i2([zero(), zero(), zero(), (&pn * &cn).scale(kw)]);
    let y_num = solve_i2([zero(), zero(), one().scale(-1.0), zero()]).scale(-1.0);
    (
        RationalFunction::new(g_num, den.clone()).unwrap(),
        RationalFunction::new(y_num, den).unwrap(),
    )
}

/// Largest per-coefficient relative mismatch of two polynomials after
/// normalizing both to a unit leading coefficient.
pub fn monic_coeff_error(a: &Polynomial, b: &Polynomial) -> f64 {
    if a.degree() != b.degree() {
        return f64::INFINITY;
    }
    let (ma, mb) = (a.monic(), b.monic());
    ma.coeffs()
        .iter()
        .zip(mb.coeffs())
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 { 0.0 } else { (x - y).abs() / scale }
        })
        .fold(0.0, f64::max)
}
