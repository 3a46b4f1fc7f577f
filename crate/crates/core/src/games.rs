//! Game instances: scalar linear-quadratic games and networked Nash-Cournot games.
//!
//! Both families share one player model
//!
//! ```text
//! J_i(x; s) = xᵀA x + cᵀx + σ(β + s)·vᵀx,   s = w_ii + Σ_j w_jiᵀ x_j + ξ_i
//! ```
//!
//! where the parameter vector `w_i = [w_ii; w_ji for in-neighbors j ascending]`
//! is what the learning path estimates. For the scalar LQ game `A = ½`,
//! `c = −a_i`, `v = 1`, `σ = +1`, `β = 0`, bias 0 and weights `K_i·w_ij`. For the
//! Cournot game `A = Q_i + (D_ii/2)H_iᵀH_i`, `c = q_i`, `v = H_iᵀ`, `σ = −1`,
//! `β = b₀`, bias `b_i` and weights `−P_ij·H_jᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::rng::{self, Purpose};
use crate::topology::{own_offsets, NetworkTopology, StructuralMaps, TopologyError, TopologySpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pseudogradient is not strongly monotone (eta = {0:e})")]
    NotStronglyMonotone(f64),
    #[error("payoff is not invertible at this decision")]
    NotInvertibleHere,
    #[error("no acceptable instance after {0} resamples")]
    RejectedInstance(usize),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GameError> {
        if lower.len() != upper.len() {
            return Err(GameError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u))
        {
            return Err(GameError::Invalid("box bounds must be finite with lower <= upper".into()));
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        BoxSet {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lo(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lower)
    }

    pub fn hi(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.upper)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        linalg::clamp_to_box(x, &self.lo(), &self.hi())
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)),
        )
    }

    pub fn min_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute coordinate value attainable in the box.
    pub fn max_abs(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(l, u)| l.abs().max(u.abs())),
        )
    }
}

/// Bounded zero-mean scalar noise: a Gaussian truncated at `radius` standard
/// deviations by rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sd: f64,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

fn default_truncation() -> f64 {
    3.0
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            sd: 0.0,
            truncation: 3.0,
        }
    }

    pub fn bound(&self) -> f64 {
        self.sd * self.truncation
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sd <= 0.0 {
            return 0.0;
        }
        let normal = Normal::new(0.0, self.sd).expect("finite sd");
        let r = self.bound();
        loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= r {
                return v;
            }
        }
    }
}

/// One player's objective in the shared form.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerModel {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub price_dir: DVector<f64>,
    pub sign: f64,
    pub base: f64,
}

impl PlayerModel {
    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn objective(&self, x: &DVector<f64>, s: f64) -> f64 {
        x.dot(&(&self.quad * x)) + self.lin.dot(x) + self.sign * (self.base + s) * self.price_dir.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>, s: f64) -> DVector<f64> {
        &self.quad * x * 2.0 + &self.lin + &self.price_dir * (self.sign * (self.base + s))
    }
}

/// Family-specific data as it appears in instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameData {
    /// `J_i = ½x_i² + (K_i Σ_j w[i][j] x_j − a_i)x_i`.
    ScalarLq {
        k: Vec<f64>,
        a: Vec<f64>,
        /// `weights[i][j]`: weight of player `j` in player `i`'s payoff.
        weights: Vec<Vec<f64>>,
    },
    /// `J_i = x_iᵀQ_ix_i + q_iᵀx_i − (b₀ + b_i − Σ_j P[i][j]H_jx_j − ½D_ii H_ix_i + ξ_i)H_ix_i`.
    NashCournot {
        /// Row-major `n_i × n_i` cost matrices.
        q_quad: Vec<Vec<Vec<f64>>>,
        q_lin: Vec<Vec<f64>>,
        h: Vec<Vec<f64>>,
        /// `p[i][j]`: weight of player `j` on player `i`'s market.
        p: Vec<Vec<f64>>,
        b0: f64,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub topology: TopologySpec,
    pub game: GameData,
    pub boxes: Vec<BoxSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_boxes: Option<Vec<BoxSet>>,
    #[serde(default = "NoiseModel::none")]
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameKind {
    ScalarLq,
    NashCournot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "InstanceSpec", into = "InstanceSpec")]
pub struct GameInstance {
    topology: NetworkTopology,
    data: GameData,
    players: Vec<PlayerModel>,
    boxes: Vec<BoxSet>,
    truth: Vec<DVector<f64>>,
    param_boxes: Vec<BoxSet>,
    explicit_param_boxes: bool,
    noise: NoiseModel,
}

impl TryFrom<InstanceSpec> for GameInstance {
    type Error = GameError;
    fn try_from(s: InstanceSpec) -> Result<Self, GameError> {
        let topo = NetworkTopology::try_from(s.topology)?;
        GameInstance::new(topo, s.game, s.boxes, s.param_boxes, s.noise)
    }
}

impl From<GameInstance> for InstanceSpec {
    fn from(g: GameInstance) -> Self {
        InstanceSpec {
            topology: g.topology.clone().into(),
            game: g.data.clone(),
            boxes: g.boxes.clone(),
            param_boxes: g.explicit_param_boxes.then(|| g.param_boxes.clone()),
            noise: g.noise,
        }
    }
}

/// Affine pseudogradient `𝔽(x) = M x + b` and its extended counterpart
/// `𝔽̃(y) = M̃ y + b`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    pub jacobian: DMatrix<f64>,
    pub extended_jacobian: DMatrix<f64>,
    pub offset: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCertificate {
    pub eta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub sigma1: f64,
    pub max_out_degree: usize,
    pub min_out_degree: usize,
}

impl GameInstance {
    pub fn new(
        topology: NetworkTopology,
        data: GameData,
        boxes: Vec<BoxSet>,
        param_boxes: Option<Vec<BoxSet>>,
        noise: NoiseModel,
    ) -> Result<Self, GameError> {
        let n = topology.player_count();
        check_len(n, boxes.len())?;
        for (i, b) in boxes.iter().enumerate() {
            let b = BoxSet::new(b.lower.clone(), b.upper.clone())?;
            check_len(topology.dim(i), b.dim())?;
        }
        if !(noise.sd >= 0.0 && noise.truncation > 0.0 && noise.sd.is_finite()) {
            return Err(GameError::Invalid("noise sd must be >= 0 and truncation > 0".into()));
        }
        let (players, truth) = match &data {
            GameData::ScalarLq { k, a, weights } => scalar_lq_models(&topology, k, a, weights)?,
            GameData::NashCournot {
                q_quad,
                q_lin,
                h,
                p,
                b0,
                b,
            } => cournot_models(&topology, q_quad, q_lin, h, p, *b0, b)?,
        };
        let explicit = param_boxes.is_some();
        let param_boxes = match param_boxes {
            Some(pb) => {
                check_len(n, pb.len())?;
                for (i, b) in pb.iter().enumerate() {
                    check_len(truth[i].len(), b.dim())?;
                    if !b.contains(&truth[i], 0.0) {
                        return Err(GameError::Invalid(format!(
                            "parameter box of player {i} does not contain the true parameters"
                        )));
                    }
                }
                pb
            }
            None => truth.iter().map(default_param_box).collect(),
        };
        Ok(GameInstance {
            topology,
            data,
            players,
            boxes,
            truth,
            param_boxes,
            explicit_param_boxes: explicit,
            noise,
        })
    }

    /// Two-or-more player scalar LQ game on `topology` with unit-dimensional decisions.
    pub fn scalar_lq(
        topology: NetworkTopology,
        k: Vec<f64>,
        a: Vec<f64>,
        weights: Vec<Vec<f64>>,
        boxes: Vec<BoxSet>,
        noise: NoiseModel,
    ) -> Result<Self, GameError> {
        GameInstance::new(topology, GameData::ScalarLq { k, a, weights }, boxes, None, noise)
    }

    pub fn kind(&self) -> GameKind {
        match self.data {
            GameData::ScalarLq { .. } => GameKind::ScalarLq,
            GameData::NashCournot { .. } => GameKind::NashCournot,
        }
    }

    pub fn data(&self) -> &GameData {
        &self.data
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn player(&self, i: usize) -> &PlayerModel {
        &self.players[i]
    }

    pub fn boxes(&self) -> &[BoxSet] {
        &self.boxes
    }

    pub fn decision_box(&self, i: usize) -> &BoxSet {
        &self.boxes[i]
    }

    /// True parameters `w_i* = [bias; weights of in-neighbors]`.
    pub fn truth(&self, i: usize) -> &DVector<f64> {
        &self.truth[i]
    }

    pub fn truths(&self) -> &[DVector<f64>] {
        &self.truth
    }

    pub fn param_box(&self, i: usize) -> &BoxSet {
        &self.param_boxes[i]
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_param_boxes(mut self, boxes: Vec<BoxSet>) -> Result<Self, GameError> {
        check_len(self.topology.player_count(), boxes.len())?;
        for (i, b) in boxes.iter().enumerate() {
            check_len(self.truth[i].len(), b.dim())?;
            if !b.contains(&self.truth[i], 0.0) {
                return Err(GameError::Invalid(format!(
                    "parameter box of player {i} does not contain the true parameters"
                )));
            }
        }
        self.param_boxes = boxes;
        self.explicit_param_boxes = true;
        Ok(self)
    }

    /// `s_i` without noise.
    pub fn aggregate(&self, x_plus: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let nw = w.len() - 1;
        w[0] + w.rows(1, nw).dot(x_plus)
    }

    fn check_player_dims(&self, i: usize, x_i: &DVector<f64>, x_plus: &DVector<f64>) -> Result<(), GameError> {
        check_len(self.topology.dim(i), x_i.len())?;
        check_len(self.topology.in_dim(i), x_plus.len())
    }

    /// Expected payoff `𝕁_i(x_i; x_i⁺, w_i)`. The noise is zero-mean and enters
    /// linearly, so this equals the scenario payoff at `ξ = 0`.
    pub fn expected_objective(
        &self,
        i: usize,
        x_i: &DVector<f64>,
        x_plus: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<f64, GameError> {
        self.check_player_dims(i, x_i, x_plus)?;
        check_len(self.truth[i].len(), w.len())?;
        Ok(self.players[i].objective(x_i, self.aggregate(x_plus, w)))
    }

    /// Realized payoff under the true parameters with a fresh noise draw.
    /// Returns `(J, ξ)`; the drawn noise is for diagnostics only.
    pub fn scenario_payoff<R: Rng + ?Sized>(
        &self,
        i: usize,
        x_i: &DVector<f64>,
        x_plus: &DVector<f64>,
        rng: &mut R,
    ) -> Result<(f64, f64), GameError> {
        self.check_player_dims(i, x_i, x_plus)?;
        let xi = self.noise.sample(rng);
        let s = self.aggregate(x_plus, &self.truth[i]) + xi;
        Ok((self.players[i].objective(x_i, s), xi))
    }

    /// Recovers `s_i` from an observed payoff.
    pub fn payoff_invert(&self, i: usize, x_i: &DVector<f64>, observed: f64) -> Result<f64, GameError> {
        check_len(self.topology.dim(i), x_i.len())?;
        let p = &self.players[i];
        let lever = p.sign * p.price_dir.dot(x_i);
        let scale = p
            .price_dir
            .iter()
            .zip(self.boxes[i].max_abs().iter())
            .map(|(v, m)| v.abs() * m)
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        if lever.abs() < 1e-9 * scale {
            return Err(GameError::NotInvertibleHere);
        }
        let rest = x_i.dot(&(&p.quad * x_i)) + p.lin.dot(x_i);
        Ok((observed - rest) / lever - p.base)
    }

    /// Partial gradient of `𝕁_i` in the player's own decision.
    pub fn partial_gradient(
        &self,
        i: usize,
        x_i: &DVector<f64>,
        x_plus: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        self.players[i].gradient(x_i, self.aggregate(x_plus, w))
    }

    /// Stacked in-neighbor decisions of player `i` taken from a plain profile `x`.
    pub fn neighbor_profile(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let offs = own_offsets(&self.topology);
        let mut out = DVector::zeros(self.topology.in_dim(i));
        let mut o = 0;
        for &j in self.topology.in_neighbors(i) {
            let d = self.topology.dim(j);
            out.rows_mut(o, d).copy_from(&x.rows(offs[j], d));
            o += d;
        }
        out
    }

    /// `𝔽(x)` under the true parameters.
    pub fn pseudogradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, GameError> {
        check_len(self.topology.total_dim(), x.len())?;
        let offs = own_offsets(&self.topology);
        let mut g = DVector::zeros(x.len());
        for i in 0..self.topology.player_count() {
            let d = self.topology.dim(i);
            let xi = x.rows(offs[i], d).into_owned();
            let xp = self.neighbor_profile(i, x);
            g.rows_mut(offs[i], d)
                .copy_from(&self.partial_gradient(i, &xi, &xp, &self.truth[i]));
        }
        Ok(g)
    }

    /// `𝔽̃(y)`: each player's partial gradient at its own decision and its local
    /// estimates, using its own parameter vector `w_hat[i]`.
    pub fn extended_pseudogradient(
        &self,
        maps: &StructuralMaps,
        y: &DVector<f64>,
        w_hat: &[DVector<f64>],
    ) -> Result<DVector<f64>, GameError> {
        check_len(maps.layout.len(), y.len())?;
        check_len(self.topology.player_count(), w_hat.len())?;
        let offs = own_offsets(&self.topology);
        let mut g = DVector::zeros(self.topology.total_dim());
        for i in 0..self.topology.player_count() {
            let (xi, xp) = self.local_view(maps, i, y);
            let d = self.topology.dim(i);
            g.rows_mut(offs[i], d)
                .copy_from(&self.partial_gradient(i, &xi, &xp, &w_hat[i]));
        }
        Ok(g)
    }

    /// Player `i`'s own decision and stacked estimates from an augmented vector.
    pub fn local_view(&self, maps: &StructuralMaps, i: usize, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let t = &self.topology;
        let own = maps.layout.own(t, i);
        let xi = y.rows(own.start, own.len()).into_owned();
        let blk = maps.layout.block(i);
        let xp = y.rows(own.end, blk.end - own.end).into_owned();
        (xi, xp)
    }

    /// Affine form of the pseudogradient under the true parameters.
    pub fn affine_operator(&self, maps: &StructuralMaps) -> AffineOperator {
        let t = &self.topology;
        let n = t.total_dim();
        let offs = own_offsets(t);
        let mut jac = DMatrix::zeros(n, n);
        let mut ext = DMatrix::zeros(n, maps.layout.len());
        let mut offset = DVector::zeros(n);
        for i in 0..t.player_count() {
            let p = &self.players[i];
            let d = t.dim(i);
            let w = &self.truth[i];
            jac.view_mut((offs[i], offs[i]), (d, d)).copy_from(&(&p.quad * 2.0));
            let own = maps.layout.own(t, i);
            ext.view_mut((offs[i], own.start), (d, d)).copy_from(&(&p.quad * 2.0));
            let mut wo = 1;
            for (k, &j) in t.in_neighbors(i).iter().enumerate() {
                let dj = t.dim(j);
                let block = &p.price_dir * w.rows(wo, dj).transpose() * p.sign;
                jac.view_mut((offs[i], offs[j]), (d, dj)).copy_from(&block);
                let r = maps.layout.estimate_at(t, i, k);
                ext.view_mut((offs[i], r.start), (d, dj)).copy_from(&block);
                wo += dj;
            }
            offset
                .rows_mut(offs[i], d)
                .copy_from(&(&p.lin + &p.price_dir * (p.sign * (p.base + w[0]))));
        }
        AffineOperator {
            jacobian: jac,
            extended_jacobian: ext,
            offset,
        }
    }

    /// Strong-monotonicity and Lipschitz constants of the pseudogradient.
    pub fn monotonicity_certificate(&self, maps: &StructuralMaps) -> Result<MonotonicityCertificate, GameError> {
        let op = self.affine_operator(maps);
        let (eta, _) = linalg::sym_extreme_eigenvalues(&op.jacobian);
        if eta <= 0.0 {
            return Err(GameError::NotStronglyMonotone(eta));
        }
        Ok(MonotonicityCertificate {
            eta,
            theta1: linalg::spectral_norm(&op.jacobian),
            theta2: linalg::spectral_norm(&op.extended_jacobian),
            sigma1: maps.sigma1,
            max_out_degree: self.topology.max_out_degree(),
            min_out_degree: self.topology.min_out_degree(),
        })
    }

    /// Constants `(α, β)` with `‖∇g_i(·; ŵ) − ∇g_i(·; w*)‖ ≤ (α‖x⁺‖ + β)‖ŵ − w*‖`.
    pub fn parameter_lipschitz(&self, i: usize) -> (f64, f64) {
        let v = self.players[i].price_dir.norm();
        (v, v)
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), GameError> {
    if expected == got {
        Ok(())
    } else {
        Err(GameError::DimensionMismatch { expected, got })
    }
}

/// Default parameter box: `[w − ¼|w|, w + ¾|w|]` per coordinate (`|w|` read as 1
/// when zero), so the box centre differs from the truth.
pub fn default_param_box(w: &DVector<f64>) -> BoxSet {
    let mut lo = Vec::with_capacity(w.len());
    let mut hi = Vec::with_capacity(w.len());
    for &v in w.iter() {
        let m = if v == 0.0 { 1.0 } else { v.abs() };
        lo.push(v - 0.25 * m);
        hi.push(v + 0.75 * m);
    }
    BoxSet { lower: lo, upper: hi }
}

fn scalar_lq_models(
    t: &NetworkTopology,
    k: &[f64],
    a: &[f64],
    weights: &[Vec<f64>],
) -> Result<(Vec<PlayerModel>, Vec<DVector<f64>>), GameError> {
    let n = t.player_count();
    check_len(n, k.len())?;
    check_len(n, a.len())?;
    check_len(n, weights.len())?;
    let mut players = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        check_len(1, t.dim(i))?;
        check_len(n, weights[i].len())?;
        players.push(PlayerModel {
            quad: DMatrix::from_element(1, 1, 0.5),
            lin: DVector::from_element(1, -a[i]),
            price_dir: DVector::from_element(1, 1.0),
            sign: 1.0,
            base: 0.0,
        });
        let mut w = vec![0.0];
        w.extend(t.in_neighbors(i).iter().map(|&j| k[i] * weights[i][j]));
        truth.push(DVector::from_vec(w));
    }
    Ok((players, truth))
}

fn cournot_models(
    t: &NetworkTopology,
    q_quad: &[Vec<Vec<f64>>],
    q_lin: &[Vec<f64>],
    h: &[Vec<f64>],
    p: &[Vec<f64>],
    b0: f64,
    b: &[f64],
) -> Result<(Vec<PlayerModel>, Vec<DVector<f64>>), GameError> {
    let n = t.player_count();
    for len in [q_quad.len(), q_lin.len(), h.len(), p.len(), b.len()] {
        check_len(n, len)?;
    }
    let mut players = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let d = t.dim(i);
        check_len(d, q_quad[i].len())?;
        let mut q = DMatrix::zeros(d, d);
        for (r, row) in q_quad[i].iter().enumerate() {
            check_len(d, row.len())?;
            for (c, &v) in row.iter().enumerate() {
                q[(r, c)] = v;
            }
        }
        if (&q - q.transpose()).abs().max() > 1e-12 {
            return Err(GameError::Invalid(format!("Q of player {i} is not symmetric")));
        }
        if linalg::sym_extreme_eigenvalues(&q).0 <= 0.0 {
            return Err(GameError::Invalid(format!("Q of player {i} is not positive definite")));
        }
        check_len(d, q_lin[i].len())?;
        check_len(d, h[i].len())?;
        check_len(n, p[i].len())?;
        let hi = DVector::from_column_slice(&h[i]);
        let degree: f64 = t.in_neighbors(i).iter().map(|&j| p[i][j]).sum();
        let quad = &q + &hi * hi.transpose() * (0.5 * degree);
        players.push(PlayerModel {
            quad,
            lin: DVector::from_column_slice(&q_lin[i]),
            price_dir: hi,
            sign: -1.0,
            base: b0,
        });
        let mut w = vec![b[i]];
        for &j in t.in_neighbors(i) {
            w.extend(h[j].iter().map(|&v| -p[i][j] * v));
        }
        truth.push(DVector::from_vec(w));
    }
    Ok((players, truth))
}

/// Distribution ranges for randomly generated Cournot instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CournotGenerator {
    pub players: usize,
    pub chords: usize,
    pub dims: (usize, usize),
    pub xmax: (f64, f64),
    pub b0: f64,
    pub bias: (f64, f64),
    pub q_entries: (f64, f64),
    pub q_lin: (f64, f64),
    pub p_entries: (f64, f64),
    pub h_entries: (f64, f64),
    pub noise_sd: f64,
    /// Lower bound enforced on the smallest eigenvalue of each sampled `Q_i`.
    pub q_floor: f64,
    pub max_resamples: usize,
}

impl Default for CournotGenerator {
    fn default() -> Self {
        CournotGenerator {
            players: 10,
            chords: 10,
            dims: (3, 5),
            xmax: (10.0, 20.0),
            b0: 50.0,
            bias: (3.0, 7.0),
            q_entries: (4.4, 4.6),
            q_lin: (1.0, 1.2),
            p_entries: (0.8, 1.0),
            h_entries: (0.8, 4.5),
            noise_sd: 0.5,
            q_floor: 0.5,
            max_resamples: 100,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Samples a Cournot instance; deterministic in `seed`.
pub fn sample_instance(seed: u64, gen: &CournotGenerator) -> Result<GameInstance, GameError> {
    if gen.players == 0 || gen.dims.0 == 0 || gen.dims.0 > gen.dims.1 {
        return Err(GameError::Invalid("generator needs players >= 1 and 1 <= dims.0 <= dims.1".into()));
    }
    let mut rng = rng::stream(seed, 0, Purpose::Instance);
    for _ in 0..gen.max_resamples.max(1) {
        let inst = sample_once(gen, &mut rng)?;
        let maps = StructuralMaps::new(inst.topology());
        if inst.monotonicity_certificate(&maps).is_ok() {
            return Ok(inst);
        }
    }
    Err(GameError::RejectedInstance(gen.max_resamples))
}

fn sample_once<R: Rng + ?Sized>(gen: &CournotGenerator, rng: &mut R) -> Result<GameInstance, GameError> {
    let n = gen.players;
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(gen.dims.0..=gen.dims.1)).collect();
    let topo = NetworkTopology::circle_with_chords(dims.clone(), gen.chords, rng)?;
    let mut boxes = Vec::with_capacity(n);
    let mut q_quad = Vec::with_capacity(n);
    let mut q_lin = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for &d in &dims {
        boxes.push(BoxSet {
            lower: vec![0.0; d],
            upper: (0..d).map(|_| uniform(rng, gen.xmax)).collect(),
        });
        let raw = DMatrix::from_fn(d, d, |_, _| uniform(rng, gen.q_entries));
        let mut q = linalg::symmetric_part(&raw);
        let lmin = linalg::sym_extreme_eigenvalues(&q).0;
        if lmin < gen.q_floor {
            q += DMatrix::identity(d, d) * (gen.q_floor - lmin);
        }
        q_quad.push((0..d).map(|r| (0..d).map(|c| q[(r, c)]).collect()).collect());
        q_lin.push((0..d).map(|_| uniform(rng, gen.q_lin)).collect());
        h.push((0..d).map(|_| uniform(rng, gen.h_entries)).collect());
    }
    let mut p = vec![vec![0.0; n]; n];
    for (i, row) in p.iter_mut().enumerate() {
        for &j in topo.in_neighbors(i) {
            row[j] = uniform(rng, gen.p_entries);
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    let b = (0..n).map(|_| uniform(rng, gen.bias)).collect();
    GameInstance::new(
        topo,
        GameData::NashCournot {
            q_quad,
            q_lin,
            h,
            p,
            b0: gen.b0,
            b,
        },
        boxes,
        None,
        NoiseModel {
            sd: gen.noise_sd,
            truncation: 3.0,
        },
    )
}
