use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the simplex constraint.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Conditional probabilities of the four (coverage, claim) outcomes, stored
/// in class order `(c, r) = (0,0), (0,1), (1,0), (1,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbQuad {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl ProbQuad {
    /// Validating constructor.
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        let quad = ProbQuad { p00, p01, p10, p11 };
        quad.validate()?;
        Ok(quad)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn uniform() -> Self {
        ProbQuad {
            p00: 0.25,
            p01: 0.25,
            p10: 0.25,
            p11: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter()
            .any(|v| !v.is_finite() || *v < -SIMPLEX_TOL || *v > 1.0 + SIMPLEX_TOL)
        {
            return Err(Error::Invalid(format!("probabilities outside [0,1]: {a:?}")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.p00, self.p01, self.p10, self.p11]
    }

    /// Probability of comprehensive coverage, `p10 + p11`.
    pub fn p(&self) -> f64 {
        self.p10 + self.p11
    }

    /// Probability of an at-fault claim, `p01 + p11`.
    pub fn q(&self) -> f64 {
        self.p01 + self.p11
    }

    /// Probability of class `2c + r`.
    pub fn class(&self, k: usize) -> f64 {
        self.to_array()[k]
    }
}

/// Class index of an outcome pair.
pub fn class_index(c: bool, r: bool) -> usize {
    2 * usize::from(c) + usize::from(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginals() {
        let q = ProbQuad::new(0.4, 0.1, 0.3, 0.2).unwrap();
        assert!((q.p() - 0.5).abs() < 1e-15);
        assert!((q.q() - 0.3).abs() < 1e-15);
        assert_eq!(class_index(true, false), 2);
        assert_eq!(q.class(class_index(false, true)), 0.1);
    }

    #[test]
    fn rejects_off_simplex() {
        assert!(ProbQuad::new(0.5, 0.5, 0.5, 0.0).is_err());
        assert!(ProbQuad::new(-0.1, 0.5, 0.5, 0.1).is_err());
        assert!(ProbQuad::new(f64::NAN, 0.5, 0.5, 0.0).is_err());
    }
}
