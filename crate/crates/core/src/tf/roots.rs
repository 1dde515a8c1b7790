use nalgebra::linalg::balancing::balance_parlett_reinsch;
use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use super::poly::Polynomial;
use crate::error::{Error, Result};

pub const DEFAULT_POLISH_ITERS: usize = 4;

const SCHUR_MAX_ITERS: usize = 10_000;

/// Roots of a real polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet {
    /// Roots in rad/s.
    pub values: Vec<Complex64>,
    /// Largest relative residual `|p(r)| / sum |c_k| |r|^k` over all roots,
    /// measured on the scaled polynomial after polishing.
    pub residual_bound: f64,
}

impl PoleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_real(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.re))
    }
}

/// All complex roots of `p`, from the eigenvalues of the companion matrix of
/// the monic, frequency-scaled polynomial, each refined by Newton steps.
///
/// The variable is rescaled `s = sigma * t` with sigma the geometric mean of
/// the successive coefficient ratios, so that polynomials built from μH/μF
/// parameters (coefficients spanning ~1e-18..1e2) stay well conditioned.
pub fn poly_roots(p: &Polynomial, polish_iters: usize) -> Result<PoleSet> {
    if !p.is_finite() {
        return Err(Error::input("non-finite polynomial coefficient"));
    }
    let degree = match p.degree() {
        None | Some(0) => {
            return Err(Error::domain("roots requested for a constant polynomial"))
        }
        Some(d) => d,
    };
    let c = p.coeffs();
    // exact roots at the origin
    let lo = c.iter().position(|&x| x != 0.0).unwrap_or(0);
    let mut values = vec![Complex64::new(0.0, 0.0); lo];
    let reduced_degree = degree - lo;
    if reduced_degree == 0 {
        return Ok(PoleSet { values, residual_bound: 0.0 });
    }

    let sigma = (c[lo].abs() / c[degree].abs()).powf(1.0 / reduced_degree as f64);
    let q = Polynomial::new(c[lo..].to_vec()).rescale_var(sigma).monic();
    let qc = q.coeffs();

    let n = reduced_degree;
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -qc[n - 1 - j];
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    let mut scaled_roots = eigenvalues(companion)?;

    let mut residual_bound: f64 = 0.0;
    for t in scaled_roots.iter_mut() {
        polish(&q, t, polish_iters);
        let scale = q.abs_eval(*t);
        let res = if scale > 0.0 { q.eval(*t).norm() / scale } else { 0.0 };
        residual_bound = residual_bound.max(res);
    }
    values.extend(scaled_roots.into_iter().map(|t| t * sigma));
    Ok(PoleSet { values, residual_bound })
}

fn polish(q: &Polynomial, t: &mut Complex64, iters: usize) {
    let mut current = q.eval(*t).norm();
    for _ in 0..iters {
        if current == 0.0 {
            break;
        }
        let (v, dv) = q.eval_with_derivative(*t);
        if dv.norm() == 0.0 {
            break;
        }
        let cand = *t - v / dv;
        let next = q.eval(cand).norm();
        if !(next < current) {
            break;
        }
        *t = cand;
        current = next;
    }
}

/// Eigenvalues of a real square matrix after Parlett-Reinsch balancing.
pub(crate) fn eigenvalues(mut m: DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("non-finite matrix entry"));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    balance_parlett_reinsch(&mut m);
    let schur = Schur::try_new(m, f64::EPSILON, SCHUR_MAX_ITERS)
        .ok_or_else(|| Error::Diagnostic("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}
