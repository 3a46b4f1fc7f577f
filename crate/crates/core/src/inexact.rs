//! Projected stochastic subgradient solver for the per-player subproblems.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::BoxSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InexactError {
    #[error("inner schedule exponent must be >= 1, got {0}")]
    BadRule(f64),
    #[error("inner schedule coefficient must be positive, got {0}")]
    BadCoefficient(f64),
}

/// Number of inner steps at outer iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerRule {
    /// `⌈0.01k⌉ + 10`.
    Default,
    /// `max(1, ⌈coef·k^alpha⌉)` with `alpha >= 1`.
    Power { coef: f64, alpha: f64 },
}

impl Default for InnerRule {
    fn default() -> Self {
        InnerRule::Default
    }
}

impl InnerRule {
    pub fn validate(&self) -> Result<(), InexactError> {
        match *self {
            InnerRule::Default => Ok(()),
            InnerRule::Power { coef, alpha } => {
                if !(alpha >= 1.0) {
                    Err(InexactError::BadRule(alpha))
                } else if !(coef > 0.0) {
                    Err(InexactError::BadCoefficient(coef))
                } else {
                    Ok(())
                }
            }
        }
    }
}

pub fn schedule_t(k: usize, rule: &InnerRule) -> Result<usize, InexactError> {
    rule.validate()?;
    Ok(match *rule {
        InnerRule::Default => (0.01 * k as f64).ceil() as usize + 10,
        InnerRule::Power { coef, alpha } => ((coef * (k as f64).powf(alpha)).ceil() as usize).max(1),
    })
}

/// Produces a stochastic subgradient at a point.
pub trait SubgradientSource {
    fn sample(&mut self, x: &DVector<f64>) -> DVector<f64>;
}

impl<F: FnMut(&DVector<f64>) -> DVector<f64>> SubgradientSource for F {
    fn sample(&mut self, x: &DVector<f64>) -> DVector<f64> {
        self(x)
    }
}

/// Gradient of `½xᵀHx + gᵀx` plus i.i.d. Gaussian noise of standard deviation `sd`
/// on each coordinate.
pub struct NoisyQuadratic<R> {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub sd: f64,
    pub rng: R,
}

impl<R: Rng> SubgradientSource for NoisyQuadratic<R> {
    fn sample(&mut self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.h * x + &self.g;
        if self.sd > 0.0 {
            let normal = Normal::new(0.0, self.sd).expect("finite sd");
            for v in out.iter_mut() {
                *v += normal.sample(&mut self.rng);
            }
        }
        out
    }
}

/// Runs exactly `steps` projected steps `x ← P(x − κ_t g_t)` with
/// `κ_t = 2τ/(t+2)` and returns the last iterate.
pub fn psg_solve<S: SubgradientSource + ?Sized>(
    source: &mut S,
    steps: usize,
    tau: f64,
    feasible: &BoxSet,
    init: &DVector<f64>,
) -> DVector<f64> {
    let mut x = feasible.project(init);
    for t in 0..steps {
        let kappa = 2.0 * tau / (t as f64 + 2.0);
        let g = source.sample(&x);
        x = feasible.project(&(&x - g * kappa));
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_values() {
        assert_eq!(schedule_t(0, &InnerRule::Default).unwrap(), 10);
        assert_eq!(schedule_t(100, &InnerRule::Default).unwrap(), 11);
        assert_eq!(schedule_t(10_000, &InnerRule::Default).unwrap(), 110);
    }

    #[test]
    fn power_schedule_rules() {
        let lin = InnerRule::Power { coef: 1.0, alpha: 1.0 };
        assert_eq!(schedule_t(0, &lin).unwrap(), 1);
        assert_eq!(schedule_t(37, &lin).unwrap(), 37);
        assert_eq!(
            schedule_t(5, &InnerRule::Power { coef: 1.0, alpha: 0.5 }),
            Err(InexactError::BadRule(0.5))
        );
    }

    #[test]
    fn hand_iterates() {
        let b = BoxSet::uniform(1, 0.0, 10.0);
        let mut src = |x: &DVector<f64>| x.map(|v| v - 1.0);
        let x0 = DVector::from_element(1, 0.0);
        assert_eq!(psg_solve(&mut src, 1, 0.5, &b, &x0)[0], 0.5);
        let x2 = psg_solve(&mut src, 2, 0.5, &b, &x0)[0];
        assert!((x2 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_init() {
        let b = BoxSet::uniform(2, 0.0, 1.0);
        let mut src = |x: &DVector<f64>| DVector::zeros(x.len());
        let x0 = DVector::from_row_slice(&[0.25, 0.75]);
        assert_eq!(psg_solve(&mut src, 50, 3.0, &b, &x0), x0);
    }
}
