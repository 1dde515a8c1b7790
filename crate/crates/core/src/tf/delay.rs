use num_complex::Complex64;

use super::poly::Polynomial;
use super::rational::RationalFunction;
use crate::error::{Error, Result};

/// Second-order Padé approximant of `exp(-td * s)`:
/// `(td² s² - 6 td s + 12) / (td² s² + 6 td s + 12)`.
///
/// `td = 0` gives the constant 1.
pub fn pade_delay(td: f64) -> Result<RationalFunction> {
    if !(td >= 0.0) || !td.is_finite() {
        return Err(Error::input(format!("delay must be finite and non-negative, got {td}")));
    }
    if td == 0.0 {
        return Ok(RationalFunction::constant(1.0));
    }
    let num = Polynomial::new(vec![12.0, -6.0 * td, td * td]);
    let den = Polynomial::new(vec![12.0, 6.0 * td, td * td]);
    RationalFunction::new(num, den)
}

/// `exp(-j omega td)`, for frequency-domain cross-checks only.
pub fn exact_delay(td: f64, omega: f64) -> Complex64 {
    Complex64::from_polar(1.0, -omega * td)
}
