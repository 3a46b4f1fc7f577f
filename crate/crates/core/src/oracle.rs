//! Centralized full-information solvers used to validate the distributed
//! algorithms. Nothing in the learning path calls into this module.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::{BoxSet, GameError, GameInstance};
use crate::gnep::{self, Coupling, KktReport};
use crate::linalg;
use crate::topology::{own_offsets, StructuralMaps};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("pseudogradient is not strongly monotone (eta = {0:e})")]
    NotStronglyMonotone(f64),
    #[error("no convergence within {iterations} iterations (residual {residual:e})")]
    Stalled { iterations: usize, residual: f64 },
    #[error("grid best responses did not reach a fixed point")]
    NoFixedPointFound,
    #[error("instance too large for this oracle: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ProjectedGradient,
    GridBestResponse,
    Extragradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub method: OracleMethod,
    /// Certificate value: projected-gradient residual, worst continuous
    /// deviation gain, or worst KKT residual depending on the method.
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub certified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local_multipliers: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt: Option<KktReport>,
}

impl OracleSolution {
    pub fn x_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }
}

fn stacked_box(inst: &GameInstance) -> (DVector<f64>, DVector<f64>) {
    let lo: Vec<f64> = inst.boxes().iter().flat_map(|b| b.lower.iter().copied()).collect();
    let hi: Vec<f64> = inst.boxes().iter().flat_map(|b| b.upper.iter().copied()).collect();
    (DVector::from_vec(lo), DVector::from_vec(hi))
}

pub const VI_MAX_ITER: usize = 5_000_000;

/// Projected-gradient solution of the variational inequality of the true
/// pseudogradient, step `η/θ₁²`.
pub fn solve_vi_centralized(inst: &GameInstance, tol: f64) -> Result<OracleSolution, OracleError> {
    solve_vi_with_budget(inst, tol, VI_MAX_ITER)
}

pub fn solve_vi_with_budget(inst: &GameInstance, tol: f64, max_iter: usize) -> Result<OracleSolution, OracleError> {
    let maps = StructuralMaps::new(inst.topology());
    let op = inst.affine_operator(&maps);
    let (eta, _) = linalg::sym_extreme_eigenvalues(&op.jacobian);
    if !(eta > 0.0) {
        return Err(OracleError::NotStronglyMonotone(eta));
    }
    let theta1 = linalg::spectral_norm(&op.jacobian);
    let alpha = eta / (theta1 * theta1);
    let (lo, hi) = stacked_box(inst);
    let f = |x: &DVector<f64>| &op.jacobian * x + &op.offset;
    let mut x = linalg::clamp_to_box(&(&lo * 0.5 + &hi * 0.5), &lo, &hi);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let g = f(&x);
        residual = linalg::projected_gradient_residual(&x, &g, &lo, &hi);
        if residual < tol {
            return Ok(OracleSolution {
                x: x.as_slice().to_vec(),
                method: OracleMethod::ProjectedGradient,
                residual,
                tolerance: tol,
                iterations: it,
                certified: true,
                lambda: None,
                local_multipliers: vec![],
                kkt: None,
            });
        }
        x = linalg::clamp_to_box(&(&x - g * alpha), &lo, &hi);
    }
    Err(OracleError::Stalled {
        iterations: max_iter,
        residual,
    })
}

const GRID_CAP: usize = 20_000_000;

fn grid_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as usize;
    let mut pts: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if hi - pts[n] > 1e-12 * (1.0 + hi.abs()) {
        pts.push(hi);
    }
    pts
}

/// Grid argmin of a player's objective with the aggregate held fixed.
fn grid_best(inst: &GameInstance, i: usize, s: f64, axes: &[Vec<f64>]) -> (DVector<f64>, f64) {
    let p = inst.player(i);
    let d = axes.len();
    let mut idx = vec![0usize; d];
    let mut best = (DVector::zeros(d), f64::INFINITY);
    let mut x = DVector::from_iterator(d, axes.iter().map(|a| a[0]));
    loop {
        let v = p.objective(&x, s);
        if v < best.1 {
            best = (x.clone(), v);
        }
        let mut k = 0;
        loop {
            if k == d {
                return best;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                x[k] = axes[k][idx[k]];
                break;
            }
            idx[k] = 0;
            x[k] = axes[k][0];
            k += 1;
        }
    }
}

/// Gauss-Seidel grid best responses to a fixed point on tiny games. The
/// certificate is the worst gain any player could get by deviating to its
/// exact best response, against `L·h + ½Λh²` with `h` the half-diagonal of a
/// grid cell, `L` the largest objective gradient over the box and `Λ` the
/// curvature.
pub fn best_response_bruteforce(inst: &GameInstance, grid_step: f64) -> Result<OracleSolution, OracleError> {
    let topo = inst.topology();
    if topo.total_dim() > 4 {
        return Err(OracleError::TooLarge(format!("total dimension {} exceeds 4", topo.total_dim())));
    }
    let n = topo.player_count();
    let axes: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            let b = inst.decision_box(i);
            (0..b.dim()).map(|k| grid_axis(b.lower[k], b.upper[k], grid_step)).collect()
        })
        .collect();
    for a in &axes {
        let count: usize = a.iter().map(|v| v.len()).product();
        if count > GRID_CAP {
            return Err(OracleError::TooLarge(format!("{count} grid points per player")));
        }
    }
    let offs = own_offsets(topo);
    let mut x = DVector::from_iterator(
        topo.total_dim(),
        (0..n).flat_map(|i| axes[i].iter().map(|a| a[0]).collect::<Vec<_>>()),
    );
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        if sweeps > 10_000 {
            return Err(OracleError::NoFixedPointFound);
        }
        let mut changed = false;
        for i in 0..n {
            let s = inst.aggregate(&inst.neighbor_profile(i, &x), inst.truth(i));
            let (bi, _) = grid_best(inst, i, s, &axes[i]);
            if bi != x.rows(offs[i], topo.dim(i)) {
                x.rows_mut(offs[i], topo.dim(i)).copy_from(&bi);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let (gain, bound) = deviation_gain(inst, &x, grid_step)?;
    Ok(OracleSolution {
        x: x.as_slice().to_vec(),
        method: OracleMethod::GridBestResponse,
        residual: gain,
        tolerance: bound,
        iterations: sweeps,
        certified: gain <= bound,
        lambda: None,
        local_multipliers: vec![],
        kkt: None,
    })
}

/// Worst exact unilateral improvement at `x` and the grid error bound.
pub fn deviation_gain(inst: &GameInstance, x: &DVector<f64>, grid_step: f64) -> Result<(f64, f64), OracleError> {
    let topo = inst.topology();
    let offs = own_offsets(topo);
    let mut gain: f64 = 0.0;
    let mut bound: f64 = 0.0;
    for i in 0..topo.player_count() {
        let d = topo.dim(i);
        let p = inst.player(i);
        let b = inst.decision_box(i);
        let s = inst.aggregate(&inst.neighbor_profile(i, x), inst.truth(i));
        let xi = x.rows(offs[i], d).into_owned();
        let h = &p.quad * 2.0;
        let g = &p.lin + &p.price_dir * (p.sign * (p.base + s));
        let br = linalg::solve_box_qp(&h, &g, &b.lo(), &b.hi(), &b.center(), 1e-12, 200)
            .map_err(|_| OracleError::NoFixedPointFound)?
            .x;
        gain = gain.max(p.objective(&xi, s) - p.objective(&br, s));
        let curv = linalg::sym_extreme_eigenvalues(&h).1.max(0.0);
        let half = b.upper.iter().zip(&b.lower).map(|(u, l)| (u - l) * 0.5).collect::<Vec<_>>();
        let lip = p.gradient(&b.center(), s).norm() + curv * DVector::from_vec(half).norm();
        let hcell = grid_step * (d as f64).sqrt() * 0.5;
        bound = bound.max(lip * hcell + 0.5 * curv * hcell * hcell);
    }
    Ok((gain, bound))
}

pub const KKT_MAX_ITER: usize = 5_000_000;

/// Extragradient on the monotone primal-dual operator
/// `(x, λ, ν) ↦ (𝔽(x) + Aᵀλ + Êᵀν, c − Ax, d̂ − Êx)` over `𝒳 × ℝ₊ᵐ × ℝ₊`.
pub fn gnep_kkt_oracle(inst: &GameInstance, coupling: &Coupling, tol: f64) -> Result<OracleSolution, OracleError> {
    let topo = inst.topology();
    let n = topo.total_dim();
    let m = coupling.m;
    if topo.player_count() > 10 || m > 3 {
        return Err(OracleError::TooLarge("more than 10 players or 3 shared constraints".into()));
    }
    let maps = StructuralMaps::new(topo);
    let op = inst.affine_operator(&maps);
    let offs = own_offsets(topo);
    let mut a = DMatrix::zeros(m, n);
    for i in 0..topo.player_count() {
        a.view_mut((0, offs[i]), (m, topo.dim(i))).copy_from(&coupling.a[i]);
    }
    // Local constraints scattered onto the plain profile.
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut owners = Vec::new();
    for i in 0..topo.player_count() {
        if let Some((e, d)) = &coupling.local[i] {
            for r in 0..e.nrows() {
                let mut row = DVector::zeros(n);
                gnep::scatter_local(topo, i, &e.row(r).transpose(), &mut row);
                rows.push(row);
                rhs.push(d[r]);
                owners.push(i);
            }
        }
    }
    let nl = rows.len();
    let mut ehat = DMatrix::zeros(nl, n);
    for (r, row) in rows.iter().enumerate() {
        ehat.set_row(r, &row.transpose());
    }
    let total = n + m + nl;
    let mut jac = DMatrix::zeros(total, total);
    jac.view_mut((0, 0), (n, n)).copy_from(&op.jacobian);
    jac.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    jac.view_mut((n, 0), (m, n)).copy_from(&(-&a));
    jac.view_mut((0, n + m), (n, nl)).copy_from(&ehat.transpose());
    jac.view_mut((n + m, 0), (nl, n)).copy_from(&(-&ehat));
    let mut off = DVector::zeros(total);
    off.rows_mut(0, n).copy_from(&op.offset);
    off.rows_mut(n, m).copy_from(&coupling.c);
    for (r, v) in rhs.iter().enumerate() {
        off[n + m + r] = *v;
    }
    let (xlo, xhi) = stacked_box(inst);
    let mut lo = DVector::from_element(total, 0.0);
    let mut hi = DVector::from_element(total, f64::INFINITY);
    lo.rows_mut(0, n).copy_from(&xlo);
    hi.rows_mut(0, n).copy_from(&xhi);
    let alpha = 0.5 / linalg::spectral_norm(&jac).max(1e-12);
    let g = |z: &DVector<f64>| &jac * z + &off;
    let mut z = DVector::zeros(total);
    z.rows_mut(0, n).copy_from(&(&xlo * 0.5 + &xhi * 0.5));
    let mut residual = f64::INFINITY;
    for it in 0..KKT_MAX_ITER {
        let gz = g(&z);
        residual = linalg::projected_gradient_residual(&z, &gz, &lo, &hi);
        if residual < tol * 0.1 {
            let x = z.rows(0, n).into_owned();
            let lam = z.rows(n, m).into_owned();
            let mut local = vec![DVector::zeros(0); topo.player_count()];
            for i in 0..topo.player_count() {
                let idx: Vec<usize> = (0..nl).filter(|&r| owners[r] == i).collect();
                if !idx.is_empty() {
                    local[i] = DVector::from_iterator(idx.len(), idx.iter().map(|&r| z[n + m + r]));
                }
            }
            let rep = gnep::kkt_residual_gnep(inst, coupling, &x, &lam, &local);
            let worst = [
                rep.stationarity,
                rep.primal_global,
                rep.primal_local,
                rep.complementarity,
                rep.local_complementarity,
            ]
            .into_iter()
            .fold(0.0, f64::max);
            return Ok(OracleSolution {
                x: x.as_slice().to_vec(),
                method: OracleMethod::Extragradient,
                residual: worst,
                tolerance: tol,
                iterations: it,
                certified: worst < tol,
                lambda: Some(lam.as_slice().to_vec()),
                local_multipliers: local.iter().map(|v| v.as_slice().to_vec()).collect(),
                kkt: Some(rep),
            });
        }
        let half = linalg::clamp_to_box(&(&z - gz * alpha), &lo, &hi);
        z = linalg::clamp_to_box(&(&z - g(&half) * alpha), &lo, &hi);
    }
    Err(OracleError::Stalled {
        iterations: KKT_MAX_ITER,
        residual,
    })
}

/// Decoupled clamp used as a sanity reference: each player's minimizer with
/// all neighbors held at `x`.
pub fn best_response(inst: &GameInstance, i: usize, x: &DVector<f64>) -> DVector<f64> {
    let p = inst.player(i);
    let b: &BoxSet = inst.decision_box(i);
    let s = inst.aggregate(&inst.neighbor_profile(i, x), inst.truth(i));
    let h = &p.quad * 2.0;
    let g = &p.lin + &p.price_dir * (p.sign * (p.base + s));
    linalg::solve_box_qp_best(&h, &g, &b.lo(), &b.hi(), &b.center(), 1e-12, 200)
        .map(|s| s.x)
        .unwrap_or_else(|_| b.center())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::NoiseModel;
    use crate::gnep::CouplingSpec;
    use crate::topology::NetworkTopology;

    fn lq2() -> GameInstance {
        let t = NetworkTopology::new(2, vec![1, 1], &[(0, 1), (1, 0)]).unwrap();
        GameInstance::scalar_lq(
            t,
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![BoxSet::uniform(1, 0.0, 10.0); 2],
            NoiseModel::none(),
        )
        .unwrap()
    }

    #[test]
    fn vi_two_player_lq() {
        let sol = solve_vi_centralized(&lq2(), 1e-12).unwrap();
        assert!(sol.certified);
        for v in &sol.x {
            assert!((v - 2.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn brute_force_two_player_lq() {
        let sol = best_response_bruteforce(&lq2(), 1e-3).unwrap();
        assert!(sol.certified, "{sol:?}");
        for v in &sol.x {
            assert!((v - 2.0 / 3.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn kkt_slack_budget_matches_vi() {
        let inst = lq2();
        let spec = CouplingSpec {
            a: vec![vec![vec![1.0]]; 2],
            c: vec![1e3],
            c_split: None,
            local: vec![],
        };
        let cp = Coupling::from_spec(&spec, inst.topology()).unwrap();
        let sol = gnep_kkt_oracle(&inst, &cp, 1e-9).unwrap();
        assert!(sol.certified);
        assert!(sol.lambda.as_ref().unwrap()[0].abs() < 1e-12);
        for v in &sol.x {
            assert!((v - 2.0 / 3.0).abs() < 1e-8);
        }
    }
}
