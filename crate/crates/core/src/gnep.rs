//! Douglas-Rachford seeking of variational generalized equilibria with shared
//! affine resource constraints `Σ A_i x_i ≤ c` and affine local coupled
//! constraints `E_i y_i ≤ d_i` over each player's own decision and estimates.
//!
//! State layout `ψ = [y; λ; μ; z]`: `λ` stacks each player's copy of the
//! resource multiplier, `μ` has one block per dependency edge (owner, head) and
//! `z` one block per directed communication edge (tail, head).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::GameInstance;
use crate::linalg::{self, QpError};
use crate::topology::{own_offsets, NetworkTopology, StructuralMaps};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnepError {
    #[error("invalid coupling: {0}")]
    BadCoupling(String),
    #[error("design matrix is not positive definite (smallest eigenvalue {0:e})")]
    PhiNotPd(f64),
    #[error("inner solve failed for player {player}: {source}")]
    InnerSolveFailed { player: usize, source: QpError },
    #[error("local projection for player {0} did not converge")]
    ProjectionFailed(usize),
    #[error("relaxation {0} outside [0, 1/2]")]
    GammaOutOfRange(f64),
}

/// Affine local coupled constraint `E y_i ≤ d` of one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalConstraint {
    pub player: usize,
    /// Row-major, `rows × (n_i + n_i⁺)`.
    pub e: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

/// Wire form of the coupling data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// Per player, row-major `m × n_i`.
    pub a: Vec<Vec<Vec<f64>>>,
    pub c: Vec<f64>,
    /// Per-player budget shares; defaults to the equal split `c/N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_split: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local: Vec<LocalConstraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub m: usize,
    pub a: Vec<DMatrix<f64>>,
    pub c: DVector<f64>,
    pub shares: Vec<DVector<f64>>,
    pub local: Vec<Option<(DMatrix<f64>, DVector<f64>)>>,
}

impl Coupling {
    pub fn from_spec(spec: &CouplingSpec, topo: &NetworkTopology) -> Result<Self, GnepError> {
        let n = topo.player_count();
        let m = spec.c.len();
        if spec.a.len() != n {
            return Err(GnepError::BadCoupling(format!("expected {n} A blocks, got {}", spec.a.len())));
        }
        let mut a = Vec::with_capacity(n);
        for (i, rows) in spec.a.iter().enumerate() {
            a.push(matrix(rows, m, topo.dim(i)).map_err(|e| GnepError::BadCoupling(format!("A[{i}]: {e}")))?);
        }
        let c = DVector::from_column_slice(&spec.c);
        let shares = match &spec.c_split {
            Some(split) => {
                if split.len() != n || split.iter().any(|s| s.len() != m) {
                    return Err(GnepError::BadCoupling("c_split must have one length-m share per player".into()));
                }
                let shares: Vec<DVector<f64>> = split.iter().map(|s| DVector::from_column_slice(s)).collect();
                let total = shares.iter().fold(DVector::zeros(m), |acc, s| acc + s);
                if (&total - &c).abs().max() > 1e-9 * (1.0 + linalg::inf_norm(&c)) {
                    return Err(GnepError::BadCoupling("budget shares do not sum to c".into()));
                }
                shares
            }
            None => vec![&c / n as f64; n],
        };
        let mut local = vec![None; n];
        for lc in &spec.local {
            if lc.player >= n {
                return Err(GnepError::BadCoupling(format!("local constraint for unknown player {}", lc.player)));
            }
            let cols = topo.dim(lc.player) + topo.in_dim(lc.player);
            let e = matrix(&lc.e, lc.d.len(), cols)
                .map_err(|e| GnepError::BadCoupling(format!("E[{}]: {e}", lc.player)))?;
            if local[lc.player].is_some() {
                return Err(GnepError::BadCoupling(format!("duplicate local constraint for player {}", lc.player)));
            }
            local[lc.player] = Some((e, DVector::from_column_slice(&lc.d)));
        }
        Ok(Coupling { m, a, c, shares, local })
    }

    /// Coupling with no constraints at all (`m = 0`).
    pub fn none(topo: &NetworkTopology) -> Self {
        let n = topo.player_count();
        Coupling {
            m: 0,
            a: (0..n).map(|i| DMatrix::zeros(0, topo.dim(i))).collect(),
            c: DVector::zeros(0),
            shares: vec![DVector::zeros(0); n],
            local: vec![None; n],
        }
    }

    /// Same constraints with different budget shares.
    pub fn with_shares(mut self, shares: Vec<DVector<f64>>) -> Result<Self, GnepError> {
        let total = shares.iter().fold(DVector::zeros(self.m), |acc, s| acc + s);
        if shares.len() != self.a.len() || (&total - &self.c).abs().max() > 1e-9 * (1.0 + linalg::inf_norm(&self.c)) {
            return Err(GnepError::BadCoupling("budget shares do not sum to c".into()));
        }
        self.shares = shares;
        Ok(self)
    }

    /// `Σ A_i x_i` for a plain profile.
    pub fn resource_use(&self, topo: &NetworkTopology, x: &DVector<f64>) -> DVector<f64> {
        let offs = own_offsets(topo);
        let mut s = DVector::zeros(self.m);
        for (i, a) in self.a.iter().enumerate() {
            s += a * x.rows(offs[i], topo.dim(i));
        }
        s
    }
}

fn add_block(phi: &mut DMatrix<f64>, at: (usize, usize), block: &DMatrix<f64>, scale: f64) {
    let mut v = phi.view_mut(at, block.shape());
    v += block * scale;
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>, String> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(format!("expected a {r}x{c} matrix"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Step sizes: `τ₁` per player (uniform over the player's slots), `τ₂` per
/// player, `τ₃` per dependency edge and `τ₄` per communication edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GnepTaus {
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    pub tau3: Vec<f64>,
    pub tau4: Vec<f64>,
}

impl GnepTaus {
    /// Diagonal dominance of the half-weighted design matrix, scaled by `safety`.
    pub fn gershgorin(
        topo: &NetworkTopology,
        maps: &StructuralMaps,
        coupling: &Coupling,
        rho: f64,
        safety: f64,
    ) -> Self {
        let n = topo.player_count();
        let mut tau1 = Vec::with_capacity(n);
        let mut tau2 = Vec::with_capacity(n);
        for i in 0..n {
            let a = &coupling.a[i];
            let col = (0..a.ncols())
                .map(|c| a.column(c).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let row = (0..a.nrows())
                .map(|r| a.row(r).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let out = topo.out_degree(i) as f64;
            let mut b1 = rho * out + 0.5 * out + 0.5 * col;
            if topo.in_degree(i) > 0 {
                b1 = b1.max(rho + 0.5);
            }
            tau1.push(safety / b1.max(1e-12));
            let deg = (topo.in_degree(i) + topo.out_degree(i)) as f64;
            let b2 = 0.5 * (row + deg);
            tau2.push(safety / b2.max(1e-12).max(0.5));
        }
        GnepTaus {
            tau1,
            tau2,
            tau3: vec![safety; maps.dependency_edges.len()],
            tau4: vec![safety; topo.edges().len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnepState {
    pub y: DVector<f64>,
    pub lam: DVector<f64>,
    pub mu: DVector<f64>,
    pub z: DVector<f64>,
}

impl GnepState {
    fn axpy(&self, a: f64, other: &GnepState, b: f64) -> GnepState {
        GnepState {
            y: &self.y * a + &other.y * b,
            lam: &self.lam * a + &other.lam * b,
            mu: &self.mu * a + &other.mu * b,
            z: &self.z * a + &other.z * b,
        }
    }

    fn max_abs_diff(&self, other: &GnepState) -> f64 {
        [
            linalg::inf_norm(&(&self.y - &other.y)),
            linalg::inf_norm(&(&self.lam - &other.lam)),
            linalg::inf_norm(&(&self.mu - &other.mu)),
            linalg::inf_norm(&(&self.z - &other.z)),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Output of one Douglas-Rachford iteration.
#[derive(Debug, Clone)]
pub struct DrOutput {
    /// Next shadow iterate `ψ̃`.
    pub shadow: GnepState,
    /// First-resolvent point `ψ`; its own decisions are the players' actions.
    pub point: GnepState,
    /// Second-resolvent point `ψ̄`.
    pub reflected: GnepState,
    /// Local-constraint multipliers recovered from the projection step.
    pub local_mult: Vec<DVector<f64>>,
    /// `‖ψ̄ − ψ‖∞`, zero exactly at fixed points.
    pub residual: f64,
}

pub struct GnepSolver<'a> {
    pub inst: &'a GameInstance,
    pub maps: &'a StructuralMaps,
    pub coupling: &'a Coupling,
    pub rho: f64,
    pub taus: GnepTaus,
    pub phi_min_eig: f64,
}

const QP_TOL: f64 = 1e-10;

impl<'a> GnepSolver<'a> {
    pub fn new(
        inst: &'a GameInstance,
        maps: &'a StructuralMaps,
        coupling: &'a Coupling,
        rho: f64,
        taus: GnepTaus,
    ) -> Result<Self, GnepError> {
        let topo = inst.topology();
        let n = topo.player_count();
        if coupling.a.len() != n {
            return Err(GnepError::BadCoupling("coupling does not match the topology".into()));
        }
        if taus.tau1.len() != n
            || taus.tau2.len() != n
            || taus.tau3.len() != maps.dependency_edges.len()
            || taus.tau4.len() != topo.edges().len()
        {
            return Err(GnepError::BadCoupling("step sizes do not match the topology".into()));
        }
        let mut s = GnepSolver {
            inst,
            maps,
            coupling,
            rho,
            taus,
            phi_min_eig: 0.0,
        };
        let phi = s.design_operator();
        let (lo, _) = linalg::sym_extreme_eigenvalues(&phi);
        if !(lo > 0.0) {
            return Err(GnepError::PhiNotPd(lo));
        }
        s.phi_min_eig = lo;
        Ok(s)
    }

    fn topo(&self) -> &NetworkTopology {
        self.inst.topology()
    }

    fn m(&self) -> usize {
        self.coupling.m
    }

    /// Dense block design matrix.
    pub fn design_operator(&self) -> DMatrix<f64> {
        let topo = self.topo();
        let ny = self.maps.layout.len();
        let nl = topo.player_count() * self.m();
        let nm = self.maps.dependency_dim();
        let nz = topo.edges().len() * self.m();
        let total = ny + nl + nm + nz;
        let mut phi = DMatrix::zeros(total, total);
        for i in 0..topo.player_count() {
            for c in self.maps.layout.block(i) {
                phi[(c, c)] = 1.0 / self.taus.tau1[i];
            }
            for r in 0..self.m() {
                phi[(ny + i * self.m() + r, ny + i * self.m() + r)] = 1.0 / self.taus.tau2[i];
            }
        }
        for (e, &off) in self.maps.dependency_offsets.iter().enumerate() {
            for t in 0..topo.dim(self.maps.dependency_edges[e].owner) {
                phi[(ny + nl + off + t, ny + nl + off + t)] = 1.0 / self.taus.tau3[e];
            }
        }
        for e in 0..topo.edges().len() {
            for r in 0..self.m() {
                let k = ny + nl + nm + e * self.m() + r;
                phi[(k, k)] = 1.0 / self.taus.tau4[e];
            }
        }
        let l = self.maps.laplacian_dense();
        add_block(&mut phi, (0, 0), &l, -0.5 * self.rho);
        let lr = self.lambda_r_matrix();
        let bt = &self.maps.dependency_incidence;
        let bm = crate::topology::multiplier_incidence(topo, self.m());
        add_block(&mut phi, (ny, 0), &lr, -0.5);
        add_block(&mut phi, (0, ny), &lr.transpose(), -0.5);
        add_block(&mut phi, (0, ny + nl), bt, -0.5);
        add_block(&mut phi, (ny + nl, 0), &bt.transpose(), -0.5);
        add_block(&mut phi, (ny, ny + nl + nm), &bm, -0.5);
        add_block(&mut phi, (ny + nl + nm, ny), &bm.transpose(), -0.5);
        phi
    }

    /// Matrix of `y ↦ [A_i y_i^i]_i`.
    fn lambda_r_matrix(&self) -> DMatrix<f64> {
        let topo = self.topo();
        let m = self.m();
        let mut lr = DMatrix::zeros(topo.player_count() * m, self.maps.layout.len());
        for i in 0..topo.player_count() {
            let own = self.maps.layout.own(topo, i);
            lr.view_mut((i * m, own.start), (m, own.len())).copy_from(&self.coupling.a[i]);
        }
        lr
    }

    pub fn zero_state(&self) -> GnepState {
        let topo = self.topo();
        GnepState {
            y: DVector::zeros(self.maps.layout.len()),
            lam: DVector::zeros(topo.player_count() * self.m()),
            mu: DVector::zeros(self.maps.dependency_dim()),
            z: DVector::zeros(topo.edges().len() * self.m()),
        }
    }

    /// Consensual start at the box centres with zero multipliers.
    pub fn initial_state(&self) -> GnepState {
        let topo = self.topo();
        let mut x = DVector::zeros(topo.total_dim());
        let offs = own_offsets(topo);
        for i in 0..topo.player_count() {
            x.rows_mut(offs[i], topo.dim(i)).copy_from(&self.inst.decision_box(i).center());
        }
        GnepState {
            y: self.maps.layout.consensual(topo, &x),
            ..self.zero_state()
        }
    }

    fn lambda_r(&self, y: &DVector<f64>) -> DVector<f64> {
        let topo = self.topo();
        let m = self.m();
        let mut out = DVector::zeros(topo.player_count() * m);
        for i in 0..topo.player_count() {
            let own = self.maps.layout.own(topo, i);
            out.rows_mut(i * m, m).copy_from(&(&self.coupling.a[i] * y.rows(own.start, own.len())));
        }
        out
    }

    fn bm(&self, z: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let mut out = DVector::zeros(self.topo().player_count() * m);
        for (e, &(tail, head)) in self.topo().edges().iter().enumerate() {
            for r in 0..m {
                out[tail * m + r] -= z[e * m + r];
                out[head * m + r] += z[e * m + r];
            }
        }
        out
    }

    fn bm_t(&self, lam: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let mut out = DVector::zeros(self.topo().edges().len() * m);
        for (e, &(tail, head)) in self.topo().edges().iter().enumerate() {
            for r in 0..m {
                out[e * m + r] = lam[head * m + r] - lam[tail * m + r];
            }
        }
        out
    }

    fn bt_t(&self, y: &DVector<f64>) -> DVector<f64> {
        self.maps.dependency_incidence.transpose() * y
    }

    /// `y − τ₁(½ρL̃y + ½(ΛR)ᵀλ + ½B̃μ)` for every slot.
    fn explicit_y(&self, y: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let topo = self.topo();
        let m = self.m();
        let mut drive = self.maps.layout.laplacian_apply(topo, y) * (0.5 * self.rho);
        drive += &self.maps.dependency_incidence * mu * 0.5;
        for i in 0..topo.player_count() {
            let own = self.maps.layout.own(topo, i);
            let at = self.coupling.a[i].transpose() * lam.rows(i * m, m) * 0.5;
            for (t, c) in own.enumerate() {
                drive[c] += at[t];
            }
        }
        let mut out = y.clone();
        for i in 0..topo.player_count() {
            for c in self.maps.layout.block(i) {
                out[c] -= self.taus.tau1[i] * drive[c];
            }
        }
        out
    }

    /// Resolvent of the first operator (objective, box, resource budget shares).
    fn resolvent_a(&self, s: &GnepState, w: &[DVector<f64>]) -> Result<GnepState, GnepError> {
        let topo = self.topo();
        let mut y = self.explicit_y(&s.y, &s.lam, &s.mu);
        for i in 0..topo.player_count() {
            let own = self.maps.layout.own(topo, i);
            let blk = self.maps.layout.block(i);
            let d = own.len();
            let x_plus = y.rows(own.end, blk.end - own.end).into_owned();
            let center = y.rows(own.start, d).into_owned();
            let p = self.inst.player(i);
            let agg = self.inst.aggregate(&x_plus, &w[i]);
            let tau = self.taus.tau1[i];
            let h = &p.quad * 2.0 + DMatrix::identity(d, d) / tau;
            let g = &p.lin + &p.price_dir * (p.sign * (p.base + agg)) - &center / tau;
            let bx = self.inst.decision_box(i);
            let x = linalg::solve_box_qp(&h, &g, &bx.lo(), &bx.hi(), &center, QP_TOL, 100)
                .map_err(|source| GnepError::InnerSolveFailed { player: i, source })?
                .x;
            y.rows_mut(own.start, d).copy_from(&x);
        }
        let lam = self.lambda_step(&s.lam, &y, &s.y, &s.z, true);
        let mu = self.mu_step(&s.mu, &y, &s.y);
        let z = self.z_step(&s.z, &lam, &s.lam);
        Ok(GnepState { y, lam, mu, z })
    }

    /// Resolvent of the second operator (local coupled constraints, multiplier sign).
    fn resolvent_b(&self, s: &GnepState) -> Result<(GnepState, Vec<DVector<f64>>), GnepError> {
        let topo = self.topo();
        let mut y = self.explicit_y(&s.y, &s.lam, &s.mu);
        let mut local_mult = vec![DVector::zeros(0); topo.player_count()];
        for i in 0..topo.player_count() {
            if let Some((e, d)) = &self.coupling.local[i] {
                let blk = self.maps.layout.block(i);
                let v = y.rows(blk.start, blk.len()).into_owned();
                let (proj, nu) = project_halfspaces(e, d, &v).ok_or(GnepError::ProjectionFailed(i))?;
                y.rows_mut(blk.start, blk.len()).copy_from(&proj);
                local_mult[i] = nu / self.taus.tau1[i];
            }
        }
        let mut lam = self.lambda_step(&s.lam, &y, &s.y, &s.z, false);
        lam.iter_mut().for_each(|v| *v = v.max(0.0));
        let mu = self.mu_step(&s.mu, &y, &s.y);
        let z = self.z_step(&s.z, &lam, &s.lam);
        Ok((GnepState { y, lam, mu, z }, local_mult))
    }

    fn lambda_step(
        &self,
        lam0: &DVector<f64>,
        y_new: &DVector<f64>,
        y_old: &DVector<f64>,
        z_old: &DVector<f64>,
        with_budget: bool,
    ) -> DVector<f64> {
        let m = self.m();
        let mut inc = self.lambda_r(y_new) - self.lambda_r(y_old) * 0.5 - self.bm(z_old) * 0.5;
        let mut out = lam0.clone();
        for i in 0..self.topo().player_count() {
            if with_budget {
                let mut blk = inc.rows_mut(i * m, m);
                blk -= &self.coupling.shares[i];
            }
            for r in 0..m {
                out[i * m + r] += self.taus.tau2[i] * inc[i * m + r];
            }
        }
        out
    }

    fn mu_step(&self, mu0: &DVector<f64>, y_new: &DVector<f64>, y_old: &DVector<f64>) -> DVector<f64> {
        let inc = self.bt_t(y_new) - self.bt_t(y_old) * 0.5;
        let mut out = mu0.clone();
        for (e, &off) in self.maps.dependency_offsets.iter().enumerate() {
            for t in 0..self.topo().dim(self.maps.dependency_edges[e].owner) {
                out[off + t] += self.taus.tau3[e] * inc[off + t];
            }
        }
        out
    }

    fn z_step(&self, z0: &DVector<f64>, lam_new: &DVector<f64>, lam_old: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let inc = self.bm_t(lam_new) - self.bm_t(lam_old) * 0.5;
        let mut out = z0.clone();
        for e in 0..self.topo().edges().len() {
            for r in 0..m {
                out[e * m + r] += self.taus.tau4[e] * inc[e * m + r];
            }
        }
        out
    }

    /// One iteration from the shadow iterate `ψ̃` with relaxation `γ ∈ [0, ½]`.
    pub fn dr_step(&self, shadow: &GnepState, w: &[DVector<f64>], gamma: f64) -> Result<DrOutput, GnepError> {
        if !(0.0..=0.5).contains(&gamma) {
            return Err(GnepError::GammaOutOfRange(gamma));
        }
        let point = self.resolvent_a(shadow, w)?;
        let hat = point.axpy(2.0, shadow, -1.0);
        let (reflected, local_mult) = self.resolvent_b(&hat)?;
        let diff = reflected.axpy(1.0, &point, -1.0);
        let next = shadow.axpy(1.0, &diff, 2.0 * gamma);
        let residual = reflected.max_abs_diff(&point);
        Ok(DrOutput {
            shadow: next,
            point,
            reflected,
            local_mult,
            residual,
        })
    }

    /// Iterates until `‖ψ̄ − ψ‖∞ < tol` or the budget is spent.
    pub fn run(&self, w: &[DVector<f64>], gamma: f64, iters: usize, tol: f64) -> Result<GnepRun, GnepError> {
        let mut shadow = self.initial_state();
        let mut last = None;
        for k in 0..iters {
            let out = self.dr_step(&shadow, w, gamma)?;
            shadow = out.shadow.clone();
            let done = out.residual < tol;
            last = Some(out);
            if done {
                return Ok(GnepRun {
                    last: last.unwrap(),
                    iterations: k + 1,
                    converged: true,
                });
            }
        }
        let last = match last {
            Some(l) => l,
            None => self.dr_step(&shadow, w, gamma)?,
        };
        Ok(GnepRun {
            last,
            iterations: iters,
            converged: false,
        })
    }

    /// KKT report at the reflected point of an iteration.
    pub fn kkt_report(&self, out: &DrOutput) -> KktReport {
        let topo = self.topo();
        let m = self.m();
        let n = topo.player_count();
        let s = &out.reflected;
        let x = self.maps.layout.own_decisions(topo, &s.y);
        let mut lam = DVector::zeros(m);
        for i in 0..n {
            lam += s.lam.rows(i * m, m);
        }
        if n > 0 {
            lam /= n as f64;
        }
        let mut lambda_gap: f64 = 0.0;
        for i in 0..n {
            lambda_gap = lambda_gap.max(linalg::inf_norm(&(s.lam.rows(i * m, m) - &lam)));
        }
        let mut report = kkt_residual_gnep(self.inst, self.coupling, &x, &lam, &out.local_mult);
        report.consensus_gap = self.maps.layout.consensus_gap(topo, &s.y);
        report.lambda_gap = lambda_gap;
        report
    }
}

#[derive(Debug, Clone)]
pub struct GnepRun {
    pub last: DrOutput,
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection of `v` onto `{u : E u ≤ d}` by projected gradient on
/// the dual. Returns the projection and the dual vector.
pub fn project_halfspaces(e: &DMatrix<f64>, d: &DVector<f64>, v: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let r = e.nrows();
    if r == 0 || (e * v - d).iter().all(|&s| s <= 0.0) {
        return Some((v.clone(), DVector::zeros(r)));
    }
    let g = e * e.transpose();
    let b = e * v - d;
    let lmax = linalg::sym_extreme_eigenvalues(&g).1;
    if !(lmax > 0.0) {
        return None;
    }
    let step = 1.0 / lmax;
    let mut nu = DVector::zeros(r);
    let tol = 1e-10 * (1.0 + linalg::inf_norm(&b));
    for _ in 0..200_000 {
        let grad = &g * &nu - &b;
        let next = (&nu - &grad * step).map(|x| x.max(0.0));
        let res = linalg::inf_norm(&(&next - &nu)) / step;
        nu = next;
        if res < tol {
            return Some((v - e.transpose() * &nu, nu));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖x − P_X(x − (F(x) + Aᵀλ + Σ ∂hᵀρ))‖∞`.
    pub stationarity: f64,
    /// `max(0, Ax − c)`.
    pub primal_global: f64,
    /// `max(0, h_i)` over all local constraints.
    pub primal_local: f64,
    /// `|λᵀ(c − Ax)|`.
    pub complementarity: f64,
    /// `max_i |ρ_iᵀh_i|`.
    pub local_complementarity: f64,
    pub consensus_gap: f64,
    pub lambda_gap: f64,
}

/// KKT residuals of a plain profile `x` with resource multiplier `λ` and local
/// multipliers `ρ_i` (empty vectors for players without local constraints).
pub fn kkt_residual_gnep(
    inst: &GameInstance,
    coupling: &Coupling,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    local_mult: &[DVector<f64>],
) -> KktReport {
    let topo = inst.topology();
    let offs = own_offsets(topo);
    let mut grad = inst.pseudogradient(x).expect("profile dimension");
    for i in 0..topo.player_count() {
        let at = coupling.a[i].transpose() * lam;
        let mut blk = grad.rows_mut(offs[i], topo.dim(i));
        blk += at;
    }
    let mut primal_local: f64 = 0.0;
    let mut local_comp: f64 = 0.0;
    for i in 0..topo.player_count() {
        let Some((e, d)) = &coupling.local[i] else { continue };
        let v = local_vector(topo, i, x);
        let h = e * &v - d;
        primal_local = primal_local.max(h.max().max(0.0));
        if let Some(rho) = local_mult.get(i).filter(|r| r.len() == h.len()) {
            local_comp = local_comp.max(rho.dot(&h).abs());
            let contrib = e.transpose() * rho;
            scatter_local(topo, i, &contrib, &mut grad);
        }
    }
    let lo = DVector::from_iterator(x.len(), inst.boxes().iter().flat_map(|b| b.lower.clone()));
    let hi = DVector::from_iterator(x.len(), inst.boxes().iter().flat_map(|b| b.upper.clone()));
    let stationarity = linalg::projected_gradient_residual(x, &grad, &lo, &hi);
    let slack = &coupling.c - coupling.resource_use(topo, x);
    KktReport {
        stationarity,
        primal_global: (-slack.clone()).iter().fold(0.0, |a: f64, &v| a.max(v)),
        primal_local,
        complementarity: lam.dot(&slack).abs(),
        local_complementarity: local_comp,
        consensus_gap: 0.0,
        lambda_gap: 0.0,
    }
}

/// `[x_i; x_j for in-neighbors j]` from a plain profile.
pub fn local_vector(topo: &NetworkTopology, i: usize, x: &DVector<f64>) -> DVector<f64> {
    let offs = own_offsets(topo);
    let mut v = DVector::zeros(topo.dim(i) + topo.in_dim(i));
    v.rows_mut(0, topo.dim(i)).copy_from(&x.rows(offs[i], topo.dim(i)));
    let mut o = topo.dim(i);
    for &j in topo.in_neighbors(i) {
        v.rows_mut(o, topo.dim(j)).copy_from(&x.rows(offs[j], topo.dim(j)));
        o += topo.dim(j);
    }
    v
}

/// Adds a vector laid out like [`local_vector`] of player `i` into a plain profile.
pub fn scatter_local(topo: &NetworkTopology, i: usize, v: &DVector<f64>, out: &mut DVector<f64>) {
    let offs = own_offsets(topo);
    let mut o = 0;
    for j in std::iter::once(i).chain(topo.in_neighbors(i).iter().copied()) {
        let d = topo.dim(j);
        let mut blk = out.rows_mut(offs[j], d);
        blk += v.rows(o, d);
        o += d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{BoxSet, NoiseModel};

    fn toy() -> (GameInstance, CouplingSpec) {
        let t = NetworkTopology::new(3, vec![1; 3], &[(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
        let w = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let inst = GameInstance::scalar_lq(
            t,
            vec![0.2; 3],
            vec![3.0, 4.0, 5.0],
            w,
            vec![BoxSet::uniform(1, 0.0, 10.0); 3],
            NoiseModel::none(),
        )
        .unwrap();
        let spec = CouplingSpec {
            a: vec![vec![vec![1.0]]; 3],
            c: vec![6.0],
            c_split: None,
            local: vec![],
        };
        (inst, spec)
    }

    #[test]
    fn halfspace_projection() {
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let d = DVector::from_element(1, 1.0);
        let (p, nu) = project_halfspaces(&e, &d, &DVector::from_row_slice(&[2.0, 0.0])).unwrap();
        assert!((p[0] - 1.5).abs() < 1e-9 && (p[1] + 0.5).abs() < 1e-9);
        assert!((nu[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn design_matrix_is_pd_with_auto_taus() {
        let (inst, spec) = toy();
        let maps = StructuralMaps::new(inst.topology());
        let cp = Coupling::from_spec(&spec, inst.topology()).unwrap();
        let taus = GnepTaus::gershgorin(inst.topology(), &maps, &cp, 1.0, 0.9);
        let s = GnepSolver::new(&inst, &maps, &cp, 1.0, taus).unwrap();
        assert!(s.phi_min_eig > 0.0);
    }

    #[test]
    fn unconstrained_multipliers_stay_zero() {
        let (inst, mut spec) = toy();
        spec.a = vec![vec![vec![0.0]]; 3];
        spec.c = vec![0.0];
        let maps = StructuralMaps::new(inst.topology());
        let cp = Coupling::from_spec(&spec, inst.topology()).unwrap();
        let taus = GnepTaus::gershgorin(inst.topology(), &maps, &cp, 1.0, 0.9);
        let s = GnepSolver::new(&inst, &maps, &cp, 1.0, taus).unwrap();
        let mut st = s.initial_state();
        for _ in 0..50 {
            let out = s.dr_step(&st, inst.truths(), 0.5).unwrap();
            assert!(out.point.lam.iter().all(|&v| v == 0.0));
            st = out.shadow;
        }
    }

    #[test]
    fn toy_binding_budget_converges() {
        let (inst, spec) = toy();
        let maps = StructuralMaps::new(inst.topology());
        let cp = Coupling::from_spec(&spec, inst.topology()).unwrap();
        let taus = GnepTaus::gershgorin(inst.topology(), &maps, &cp, 1.0, 0.9);
        let s = GnepSolver::new(&inst, &maps, &cp, 1.0, taus).unwrap();
        let run = s.run(inst.truths(), 0.5, 50_000, 1e-11).unwrap();
        assert!(run.converged, "residual {}", run.last.residual);
        let rep = s.kkt_report(&run.last);
        assert!(rep.stationarity < 1e-8, "{rep:?}");
        assert!(rep.lambda_gap < 1e-8 && rep.complementarity < 1e-8);
        let x = maps.layout.own_decisions(inst.topology(), &run.last.reflected.y);
        assert!((x.sum() - 6.0).abs() < 1e-8);
    }
}
