//! Exploration, feasibility-preserving play, and constrained online least squares.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::{BoxSet, GameError, GameInstance};
use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("pivot lies outside the feasible box")]
    PivotInfeasible,
    #[error("invalid exploration setup: {0}")]
    BadExploration(String),
    #[error("not enough history for the decay diagnostic")]
    InsufficientHistory,
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Per-player exploration: a ball `B_r(p)` inside the decision box and
/// per-coordinate uniform perturbations on `[−δ, δ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationConfig {
    pub center: DVector<f64>,
    pub radius: f64,
    /// Per-coordinate half width `δ`.
    pub delta: f64,
}

impl ExplorationConfig {
    /// Centre of the box, radius half the smallest half-width, and
    /// `δ = scale/(2√n)·(smallest box width)`.
    pub fn from_box(b: &BoxSet, scale: f64) -> Result<Self, EstimatorError> {
        let n = b.dim() as f64;
        let delta = scale / (2.0 * n.sqrt()) * b.min_width();
        Self::with_delta(b, delta)
    }

    pub fn with_delta(b: &BoxSet, delta: f64) -> Result<Self, EstimatorError> {
        let cfg = ExplorationConfig {
            center: b.center(),
            radius: 0.25 * b.min_width(),
            delta,
        };
        cfg.validate(b)?;
        Ok(cfg)
    }

    /// Bound `δ̄ = δ√n` on the Euclidean norm of a draw.
    pub fn delta_bar(&self) -> f64 {
        self.delta * (self.center.len() as f64).sqrt()
    }

    /// Smallest eigenvalue of the exploration covariance.
    pub fn variance(&self) -> f64 {
        self.delta * self.delta / 3.0
    }

    pub fn validate(&self, b: &BoxSet) -> Result<(), EstimatorError> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(EstimatorError::BadExploration(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.radius > 0.0) {
            return Err(EstimatorError::BadExploration("the decision box has empty interior".into()));
        }
        for k in 0..b.dim() {
            if self.center[k] - self.radius < b.lower[k] || self.center[k] + self.radius > b.upper[k] {
                return Err(EstimatorError::BadExploration("exploration ball leaves the box".into()));
            }
        }
        if self.delta_bar() >= self.radius {
            return Err(EstimatorError::BadExploration(format!(
                "exploration bound {} must be below the ball radius {}",
                self.delta_bar(),
                self.radius
            )));
        }
        Ok(())
    }
}

pub fn draw_exploration<R: Rng + ?Sized>(cfg: &ExplorationConfig, rng: &mut R) -> DVector<f64> {
    let d = cfg.delta;
    DVector::from_iterator(
        cfg.center.len(),
        (0..cfg.center.len()).map(|_| if d > 0.0 { rng.random_range(-d..=d) } else { 0.0 }),
    )
}

/// Shrinks the pivot towards the ball centre before adding the perturbation so
/// that the played point stays feasible.
pub fn safe_net_adjust(
    pivot: &DVector<f64>,
    delta: &DVector<f64>,
    cfg: &ExplorationConfig,
    feasible: &BoxSet,
) -> Result<DVector<f64>, EstimatorError> {
    if !feasible.contains(pivot, 1e-12) {
        return Err(EstimatorError::PivotInfeasible);
    }
    let t = cfg.delta_bar() / cfg.radius;
    let played = pivot * (1.0 - t) + &cfg.center * t + delta;
    // Guard against round-off at the boundary.
    Ok(feasible.project(&played))
}

/// Running Gram matrix and moment vector of the regression `s ≈ ⟨ℓ, w⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionLog {
    pub gram: DMatrix<f64>,
    pub moment: DVector<f64>,
    pub count: usize,
    pub skips: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Accepted,
    Skipped,
}

impl RegressionLog {
    pub fn new(dim: usize) -> Self {
        RegressionLog {
            gram: DMatrix::zeros(dim, dim),
            moment: DVector::zeros(dim),
            count: 0,
            skips: 0,
        }
    }

    pub fn push(&mut self, regressor: &DVector<f64>, s: f64) {
        self.gram += regressor * regressor.transpose();
        self.moment += regressor * s;
        self.count += 1;
    }

    /// Smallest eigenvalue of the sample-averaged Gram matrix.
    pub fn min_eig(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        linalg::sym_extreme_eigenvalues(&(&self.gram / self.count as f64)).0
    }

    /// Inverts the observed payoff, forms `ℓ = [1; played neighbors]` and
    /// accumulates. Non-invertible rounds are counted and skipped.
    pub fn record(
        &mut self,
        inst: &GameInstance,
        i: usize,
        played_self: &DVector<f64>,
        played_neighbors: &DVector<f64>,
        observed: f64,
    ) -> Result<Observation, EstimatorError> {
        match inst.payoff_invert(i, played_self, observed) {
            Ok(s) => {
                self.push(&regressor(played_neighbors), s);
                Ok(Observation::Accepted)
            }
            Err(GameError::NotInvertibleHere) => {
                self.skips += 1;
                Ok(Observation::Skipped)
            }
            Err(e) => Err(e.into()),
        }
    }
}

pub fn regressor(neighbors: &DVector<f64>) -> DVector<f64> {
    let mut l = DVector::zeros(neighbors.len() + 1);
    l[0] = 1.0;
    l.rows_mut(1, neighbors.len()).copy_from(neighbors);
    l
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlseResult {
    pub w: DVector<f64>,
    /// Projected-gradient optimality residual of the averaged least-squares objective.
    pub residual: f64,
    pub converged: bool,
}

/// Minimizes `½wᵀḠw − m̄ᵀw` over the box, `Ḡ, m̄` being sample averages.
///
/// A tiny proximal term towards the previous estimate keeps every subproblem
/// strictly convex; repeating the proximal step a few times removes its bias in
/// identified directions while unidentified directions stay at the previous
/// value, which selects the minimizer closest to it.
pub fn olse_solve(log: &RegressionLog, feasible: &BoxSet, previous: &DVector<f64>) -> OlseResult {
    if log.count == 0 {
        return OlseResult {
            w: previous.clone(),
            residual: 0.0,
            converged: true,
        };
    }
    let c = log.count as f64;
    let g = &log.gram / c;
    let m = &log.moment / c;
    let d = m.len();
    let (lo, hi) = (feasible.lo(), feasible.hi());
    let lmax = linalg::sym_extreme_eigenvalues(&g).1.max(0.0);
    let eps = 1e-9 * lmax.max(1.0);
    let h = &g + DMatrix::identity(d, d) * eps;
    let scale = 1.0 + linalg::inf_norm(&m) + lmax * linalg::inf_norm(&hi).max(linalg::inf_norm(&lo));
    let tol = 1e-12 * scale;

    let mut w = feasible.project(previous);
    let mut converged = true;
    for _ in 0..4 {
        let rhs = -(&m + &w * eps);
        match linalg::solve_box_qp_best(&h, &rhs, &lo, &hi, &w, tol, 200) {
            Ok(sol) => {
                converged = sol.converged;
                let step = linalg::inf_norm(&(&sol.x - &w));
                w = sol.x;
                if step <= 1e-14 * (1.0 + linalg::inf_norm(&w)) {
                    break;
                }
            }
            Err(_) => {
                converged = false;
                break;
            }
        }
    }
    let grad = &g * &w - &m;
    let residual = linalg::projected_gradient_residual(&w, &grad, &lo, &hi);
    OlseResult { w, residual, converged }
}

/// `D̲ = ¼σ̄⁺ min{C⁻², 1}`.
pub fn identifiability_threshold(sigma_plus: f64, c: f64) -> f64 {
    0.25 * sigma_plus * (1.0 / (c * c)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub min_eig: f64,
    pub threshold: f64,
    pub under_identified: bool,
    /// Whether the side condition `σ̄⁺ ≤ C` holds.
    pub side_condition: bool,
}

/// Compares the averaged Gram spectrum of player `i` with the lower bound
/// implied by its in-neighbors' exploration.
pub fn identifiability_diagnostic(
    log: &RegressionLog,
    inst: &GameInstance,
    exploration: &[ExplorationConfig],
    i: usize,
) -> IdentifiabilityReport {
    let topo = inst.topology();
    let nbrs = topo.in_neighbors(i);
    let sigma_plus = nbrs
        .iter()
        .map(|&j| exploration[j].variance())
        .fold(f64::INFINITY, f64::min);
    let sigma_plus = if sigma_plus.is_finite() { sigma_plus } else { 0.0 };
    let xbar = nbrs
        .iter()
        .flat_map(|&j| inst.decision_box(j).max_abs().iter().copied().collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let c = xbar * (topo.in_dim(i) as f64).sqrt();
    let threshold = if c > 0.0 {
        identifiability_threshold(sigma_plus, c)
    } else {
        0.25 * sigma_plus
    };
    let min_eig = log.min_eig();
    IdentifiabilityReport {
        min_eig,
        threshold,
        under_identified: log.count == 0 || min_eig < threshold,
        side_condition: sigma_plus <= c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Least-squares slope of `ln err` against `ln k`; `None` at the numerical floor.
    pub slope: Option<f64>,
    pub at_floor: bool,
    /// `max k·‖ŵ_{k+1} − ŵ_k‖` over the window.
    pub max_scaled_increment: f64,
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Decay diagnostics over `k ∈ [lo, hi]` from `(k, error, increment)` records.
pub fn decay_diagnostics(
    history: &[(usize, f64, f64)],
    window: (usize, usize),
) -> Result<DecayReport, EstimatorError> {
    let sel: Vec<&(usize, f64, f64)> = history
        .iter()
        .filter(|(k, _, _)| *k >= window.0 && *k <= window.1)
        .collect();
    if sel.len() < 2 {
        return Err(EstimatorError::InsufficientHistory);
    }
    let at_floor = sel.iter().all(|(_, e, _)| *e < 1e-12);
    let slope = if at_floor {
        None
    } else {
        loglog_slope(&sel.iter().map(|(k, e, _)| (*k as f64, *e)).collect::<Vec<_>>())
    };
    let max_scaled_increment = sel.iter().map(|(k, _, d)| *k as f64 * d).fold(0.0, f64::max);
    Ok(DecayReport {
        slope,
        at_floor,
        max_scaled_increment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn safe_net_corner_example() {
        let b = BoxSet::uniform(1, 0.0, 10.0);
        let cfg = ExplorationConfig {
            center: dv(&[5.0]),
            radius: 5.0,
            delta: 0.1,
        };
        let played = safe_net_adjust(&dv(&[10.0]), &dv(&[0.1]), &cfg, &b).unwrap();
        assert!((played[0] - 10.0).abs() < 1e-12);
        let at_center = safe_net_adjust(&dv(&[5.0]), &dv(&[-0.07]), &cfg, &b).unwrap();
        assert!((at_center[0] - 4.93).abs() < 1e-12);
        assert_eq!(
            safe_net_adjust(&dv(&[11.0]), &dv(&[0.0]), &cfg, &b),
            Err(EstimatorError::PivotInfeasible)
        );
    }

    #[test]
    fn gram_by_hand() {
        let mut log = RegressionLog::new(2);
        for x in [0.0, 1.0, 2.0] {
            log.push(&regressor(&dv(&[x])), 3.0 + 2.0 * x);
        }
        assert_eq!(log.gram, DMatrix::from_row_slice(2, 2, &[3.0, 3.0, 3.0, 5.0]));
        let r = olse_solve(&log, &BoxSet::uniform(2, 0.0, 10.0), &dv(&[7.0, 7.0]));
        assert!((r.w[0] - 3.0).abs() < 1e-8 && (r.w[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn rank_deficient_tie_break() {
        let mut log = RegressionLog::new(2);
        log.push(&dv(&[1.0, 0.0]), 4.0);
        let r = olse_solve(&log, &BoxSet::uniform(2, 0.0, 10.0), &dv(&[0.0, 0.0]));
        assert!((r.w[0] - 4.0).abs() < 1e-8 && r.w[1].abs() < 1e-12);
    }

    #[test]
    fn threshold_example() {
        assert!((identifiability_threshold(0.04, 2.0) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn constant_regressor_is_under_identified() {
        let mut log = RegressionLog::new(2);
        for _ in 0..10 {
            log.push(&dv(&[1.0, 3.0]), 1.0);
        }
        assert!(log.min_eig().abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..50).map(|k| (k as f64, 3.0 * (k as f64).powf(-0.5))).collect();
        assert!((loglog_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
    }
}
