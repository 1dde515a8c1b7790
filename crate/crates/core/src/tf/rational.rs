use std::fmt;

use num_complex::Complex64;

use super::poly::Polynomial;
use super::roots::{poly_roots, DEFAULT_POLISH_ITERS};
use crate::error::{Error, Result};

/// Ratio of two real polynomials.
///
/// The denominator is never zero and its leading coefficient is positive.
/// Arithmetic never cancels common factors on its own; use
/// [`RationalFunction::reduce`] for that.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFunction {
    num: Polynomial,
    den: Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl RationalFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::domain("rational function with zero denominator"));
        }
        if !num.is_finite() || !den.is_finite() {
            return Err(Error::input("non-finite coefficient in rational function"));
        }
        Ok(Self::canonical(num, den))
    }

    /// Caller guarantees `den` is nonzero.
    pub(crate) fn canonical(num: Polynomial, den: Polynomial) -> Self {
        debug_assert!(!den.is_zero());
        if den.leading() < 0.0 {
            Self { num: -num, den: -den }
        } else {
            Self { num, den }
        }
    }

    pub fn from_poly(p: Polynomial) -> Self {
        Self { num: p, den: Polynomial::one() }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_poly(Polynomial::constant(c))
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn into_parts(self) -> (Polynomial, Polynomial) {
        (self.num, self.den)
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::canonical(self.num.scale(k), self.den.clone())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_impl(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_impl(other, -1.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::canonical(&self.num * &other.num, &self.den * &other.den)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        if other.num.is_zero() {
            return Err(Error::domain("division by the zero rational function"));
        }
        Ok(Self::canonical(&self.num * &other.den, &self.den * &other.num))
    }

    // Shared denominators are reused as-is; otherwise the plain product is
    // the common denominator.
    fn add_impl(&self, other: &Self, sign: f64) -> Self {
        if self.den == other.den {
            let num = &self.num + &other.num.scale(sign);
            return Self::canonical(num, self.den.clone());
        }
        let num = &(&self.num * &other.den) + &(&other.num * &self.den).scale(sign);
        Self::canonical(num, &self.den * &other.den)
    }

    /// `||num(a - b)|| / (||num(a) den(b)|| + ||num(b) den(a)||)`: zero when
    /// the two rationals are the same function, regardless of how each is
    /// written.
    pub fn relative_difference(&self, other: &Self) -> f64 {
        let lhs = &self.num * &other.den;
        let rhs = &other.num * &self.den;
        let scale = lhs.norm2() + rhs.norm2();
        if scale == 0.0 {
            return 0.0;
        }
        (&lhs - &rhs).norm2() / scale
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let d = self.den.eval(s);
        let scale = self.den.abs_eval(s);
        if d.norm() <= f64::EPSILON * scale {
            return Err(Error::EvalAtPole { pole: s });
        }
        Ok(self.num.eval(s) / d)
    }

    /// Cancel numerator/denominator root pairs closer than
    /// `rel_tol * max(|root|, 1)`.
    ///
    /// Pairing is nearest-neighbour: denominator roots are visited in order
    /// of increasing imaginary part, then real part, and each takes the
    /// closest still-unpaired numerator root (ties again resolved by
    /// imaginary then real part). The gain `lead(num)/lead(den)` is kept.
    pub fn reduce(&self, rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
            return Err(Error::input(format!("reduce tolerance {rel_tol} outside (0, 1e-2]")));
        }
        let (Some(dn), Some(dd)) = (self.num.degree(), self.den.degree()) else {
            return Ok(self.clone());
        };
        if dn == 0 || dd == 0 {
            return Ok(self.clone());
        }
        let mut zeros = poly_roots(&self.num, DEFAULT_POLISH_ITERS)?.values;
        let mut poles = poly_roots(&self.den, DEFAULT_POLISH_ITERS)?.values;
        zeros.sort_by(complex_order);
        poles.sort_by(complex_order);

        let mut zero_used = vec![false; zeros.len()];
        let mut pole_used = vec![false; poles.len()];
        for (pi, p) in poles.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (zi, z) in zeros.iter().enumerate() {
                if zero_used[zi] {
                    continue;
                }
                let d = (p - z).norm();
                // zeros are pre-sorted, so strict < keeps the tie-break order
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((zi, d));
                }
            }
            if let Some((zi, d)) = best {
                if d <= rel_tol * p.norm().max(zeros[zi].norm()).max(1.0) {
                    zero_used[zi] = true;
                    pole_used[pi] = true;
                }
            }
        }
        if !pole_used.iter().any(|&u| u) {
            return Ok(self.clone());
        }
        let kept = |v: &[Complex64], used: &[bool]| {
            v.iter()
                .zip(used)
                .filter(|(_, &u)| !u)
                .map(|(r, _)| *r)
                .collect::<Vec<_>>()
        };
        let num = Polynomial::from_roots(&kept(&zeros, &zero_used)).scale(self.num.leading());
        let den = Polynomial::from_roots(&kept(&poles, &pole_used)).scale(self.den.leading());
        Ok(Self::canonical(num, den))
    }
}

fn complex_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re))
}

/// Exact coefficient arithmetic on two rationals.
pub fn rf_arith(a: &RationalFunction, b: &RationalFunction, op: ArithOp) -> Result<RationalFunction> {
    match op {
        ArithOp::Add => Ok(a.add(b)),
        ArithOp::Sub => Ok(a.sub(b)),
        ArithOp::Mul => Ok(a.mul(b)),
        ArithOp::Div => a.div(b),
    }
}

impl From<Polynomial> for RationalFunction {
    fn from(p: Polynomial) -> Self {
        Self::from_poly(p)
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}
