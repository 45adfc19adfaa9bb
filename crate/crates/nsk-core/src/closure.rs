//! Polynomial constitutive closures.
//!
//! Pressure, viscosity, and capillarity laws enter the model as analytic
//! functions of the density; polynomials in the monomial basis cover every
//! configuration the toolkit ships and differentiate exactly.

use serde::{Deserialize, Serialize};

/// Real polynomial `c0 + c1 x + c2 x^2 + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn evaluates_cubic() {
        // 2 - x + 3x^3
        let p = Polynomial::new(vec![2.0, -1.0, 0.0, 3.0]);
        assert_relative_eq!(p.eval(2.0), 2.0 - 2.0 + 24.0);
        assert_relative_eq!(p.eval(0.0), 2.0);
    }

    #[test]
    fn differentiates() {
        let p = Polynomial::new(vec![2.0, -1.0, 0.0, 3.0]);
        let dp = p.derivative();
        assert_eq!(dp.coeffs(), &[-1.0, 0.0, 9.0]);
        assert_relative_eq!(dp.eval(1.5), -1.0 + 9.0 * 2.25);
        assert_eq!(Polynomial::constant(5.0).derivative().coeffs().len(), 0);
        assert_relative_eq!(Polynomial::zero().eval(3.0), 0.0);
    }
}
