//! The assembled learning loop: seeking step with current beliefs, then
//! exploration, play, observation and least-squares update.

use std::path::Path;

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ExplorationRule, Mode, ParamBoxRule, RhoChoice, RhoRule, RunConfig};
use super::metrics::{self, MetricsRow};
use crate::estimator::{self, DecayReport, ExplorationConfig, IdentifiabilityReport, Observation, RegressionLog};
use crate::games::{BoxSet, GameInstance};
use crate::gnep::{Coupling, GnepSolver, GnepTaus, KktReport};
use crate::oracle;
use crate::rng::{self, Purpose};
use crate::seeker::{self, GammaSchedule, InnerSolver, Seeker, StepConfig};
use crate::topology::{NetworkTopology, StructuralMaps};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

fn numerical<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Numerical(e.to_string())
}

/// Per-iteration record kept for diagnostics (independent of the CSV cadence).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub k: usize,
    pub dist_sne: Option<f64>,
    pub step_rel: f64,
    /// Mean relative parameter error of the beliefs at iteration `k`.
    pub param_err: Option<f64>,
    /// `‖ŵ^(k+1) − ŵ^(k)‖` over all players.
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub method: oracle::OracleMethod,
    pub residual: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupInfo {
    /// Number of leading metrics rows flagged as warmup.
    pub rows: usize,
    /// Iteration index of the last flagged row.
    pub through_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summability {
    /// `Σ_k γ_k ‖ŵ^(k+1) − ŵ^(k)‖`.
    pub sum: f64,
    /// Same sum over the first half of the run.
    pub half_sum: f64,
    pub last_increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub iterations: usize,
    pub converged: bool,
    pub rho: f64,
    pub phi_min_eig: f64,
    pub oracle: Option<OracleInfo>,
    pub final_row: Option<MetricsRow>,
    pub consensus_gap: f64,
    pub warmup: WarmupInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summability: Option<Summability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identifiability: Vec<IdentifiabilityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt: Option<KktReport>,
}

pub const WARMUP_ROWS: usize = 150;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub trace: Vec<TracePoint>,
    pub summary: Summary,
    /// Final augmented decisions (or the decision part of the GNEP state).
    pub y: DVector<f64>,
    pub beliefs: Vec<DVector<f64>>,
    /// Reference equilibrium used for `dist_sne`, when available.
    pub reference: Option<DVector<f64>>,
}

fn gamma_of(cfg: &RunConfig) -> GammaSchedule {
    cfg.step.gamma.unwrap_or(GammaSchedule::Constant(0.5))
}

fn pick_rho(cfg: &RunConfig, inst: &GameInstance, maps: &StructuralMaps) -> Result<f64, RunError> {
    match cfg.step.rho {
        RhoChoice::Value(r) => Ok(r),
        RhoChoice::Rule(RhoRule::Auto) => {
            let cert = inst.monotonicity_certificate(maps).map_err(numerical)?;
            seeker::choose_rho(&cert, cfg.step.rho_margin).map_err(numerical)
        }
        RhoChoice::Rule(RhoRule::Monotone) => {
            seeker::choose_rho_monotone(inst, maps, cfg.step.rho_margin).map_err(numerical)
        }
    }
}

/// Per-player blocks of the own decisions in an augmented vector.
fn own_blocks(topo: &NetworkTopology, maps: &StructuralMaps, y: &DVector<f64>) -> Vec<DVector<f64>> {
    (0..topo.player_count())
        .map(|i| {
            let r = maps.layout.own(topo, i);
            y.rows(r.start, r.len()).into_owned()
        })
        .collect()
}

fn split_plain(topo: &NetworkTopology, x: &DVector<f64>) -> Vec<DVector<f64>> {
    let offs = crate::topology::own_offsets(topo);
    (0..topo.player_count())
        .map(|i| x.rows(offs[i], topo.dim(i)).into_owned())
        .collect()
}

fn dist_to(blocks: &[DVector<f64>], reference: &[DVector<f64>]) -> f64 {
    let pairs: Vec<_> = blocks.iter().cloned().zip(reference.iter().cloned()).collect();
    metrics::mean_relative(&pairs)
}

fn step_rel(next: &[DVector<f64>], cur: &[DVector<f64>]) -> f64 {
    let pairs: Vec<_> = next.iter().cloned().zip(cur.iter().cloned()).collect();
    metrics::mean_relative(&pairs)
}

/// Parameter boxes for the learning run.
pub fn param_boxes(inst: &GameInstance, rule: &ParamBoxRule) -> Vec<BoxSet> {
    let n = inst.topology().player_count();
    (0..n)
        .map(|i| {
            let w = inst.truth(i);
            match *rule {
                ParamBoxRule::Instance => inst.param_box(i).clone(),
                ParamBoxRule::Truth => BoxSet {
                    lower: w.iter().copied().collect(),
                    upper: w.iter().copied().collect(),
                },
                ParamBoxRule::Relative { below, above } => {
                    let (mut lo, mut hi) = (Vec::new(), Vec::new());
                    for &v in w.iter() {
                        let m = if v == 0.0 { 1.0 } else { v.abs() };
                        lo.push(v - below * m);
                        hi.push(v + above * m);
                    }
                    BoxSet { lower: lo, upper: hi }
                }
            }
        })
        .collect()
}

/// Exploration set-up per player.
pub fn exploration_configs(inst: &GameInstance, rule: &ExplorationRule) -> Result<Vec<ExplorationConfig>, RunError> {
    let n = inst.topology().player_count();
    if let ExplorationRule::Explicit { delta } = rule {
        if delta.len() != n {
            return Err(ConfigError::schema("<config>", "estimator.exploration.delta", "one value per player").into());
        }
    }
    (0..n)
        .map(|i| {
            let b = inst.decision_box(i);
            match rule {
                ExplorationRule::Scaled { scale } => ExplorationConfig::from_box(b, *scale),
                ExplorationRule::Explicit { delta } => ExplorationConfig::with_delta(b, delta[i]),
            }
            .map_err(numerical)
        })
        .collect()
}

/// Loads the instance named by the config and runs it.
pub fn run_config(cfg: &RunConfig, base: Option<&Path>) -> Result<(GameInstance, RunOutput), RunError> {
    let inst = cfg.load_instance(base, "<config>")?;
    let out = run_algorithm1(cfg, &inst)?;
    Ok((inst, out))
}

pub fn run_algorithm1(cfg: &RunConfig, inst: &GameInstance) -> Result<RunOutput, RunError> {
    cfg.validate("<config>")?;
    match cfg.mode {
        Mode::Exact | Mode::Learn => run_seeking(cfg, inst),
        Mode::Gnep => run_gnep(cfg, inst),
    }
}

struct LearnState {
    boxes: Vec<BoxSet>,
    exploration: Vec<ExplorationConfig>,
    logs: Vec<RegressionLog>,
    beliefs: Vec<DVector<f64>>,
    noise: Vec<ChaCha8Rng>,
    explore: Vec<ChaCha8Rng>,
}

impl LearnState {
    fn new(cfg: &RunConfig, inst: &GameInstance) -> Result<Self, RunError> {
        let n = inst.topology().player_count();
        let boxes = param_boxes(inst, &cfg.estimator.param_boxes);
        let beliefs = boxes.iter().map(|b| b.center()).collect();
        Ok(LearnState {
            exploration: exploration_configs(inst, &cfg.estimator.exploration)?,
            logs: (0..n).map(|i| RegressionLog::new(inst.truth(i).len())).collect(),
            beliefs,
            boxes,
            noise: (0..n).map(|i| rng::stream(cfg.seed, i, Purpose::Noise)).collect(),
            explore: (0..n).map(|i| rng::stream(cfg.seed, i, Purpose::Exploration)).collect(),
        })
    }

    /// Explores around the pivots, plays, observes and refits. Returns the
    /// Euclidean norm of the total belief change.
    fn update(
        &mut self,
        inst: &GameInstance,
        pivots: &[DVector<f64>],
        parallel: bool,
    ) -> Result<f64, RunError> {
        let topo = inst.topology();
        let n = topo.player_count();
        let played: Vec<Result<DVector<f64>, RunError>> = {
            let f = |(i, r): (usize, &mut ChaCha8Rng)| {
                let d = estimator::draw_exploration(&self.exploration[i], r);
                estimator::safe_net_adjust(&pivots[i], &d, &self.exploration[i], inst.decision_box(i)).map_err(numerical)
            };
            if parallel {
                self.explore.par_iter_mut().enumerate().map(f).collect()
            } else {
                self.explore.iter_mut().enumerate().map(f).collect()
            }
        };
        let played: Vec<DVector<f64>> = played.into_iter().collect::<Result<_, _>>()?;
        let profile = seeker::stack(topo, played.iter().cloned());
        let boxes = &self.boxes;
        let step = |(((i, r), log), w): (((usize, &mut ChaCha8Rng), &mut RegressionLog), &mut DVector<f64>)| {
            let x_plus = inst.neighbor_profile(i, &profile);
            let (j, _) = inst.scenario_payoff(i, &played[i], &x_plus, r).map_err(numerical)?;
            let obs = log.record(inst, i, &played[i], &x_plus, j).map_err(numerical)?;
            if obs == Observation::Accepted {
                let fit = estimator::olse_solve(log, &boxes[i], w);
                let inc = (&fit.w - &*w).norm_squared();
                *w = fit.w;
                Ok(inc)
            } else {
                Ok(0.0)
            }
        };
        let incs: Vec<Result<f64, RunError>> = if parallel {
            self.noise
                .par_iter_mut()
                .enumerate()
                .zip(self.logs.par_iter_mut())
                .zip(self.beliefs.par_iter_mut())
                .map(step)
                .collect()
        } else {
            self.noise
                .iter_mut()
                .enumerate()
                .zip(self.logs.iter_mut())
                .zip(self.beliefs.iter_mut())
                .map(step)
                .collect()
        };
        let mut total = 0.0;
        for v in incs.into_iter().take(n) {
            total += v?;
        }
        Ok(total.sqrt())
    }
}

fn run_seeking(cfg: &RunConfig, inst: &GameInstance) -> Result<RunOutput, RunError> {
    let topo = inst.topology();
    let maps = StructuralMaps::new(topo);
    let rho = pick_rho(cfg, inst, &maps)?;
    let gamma = gamma_of(cfg);
    let step = StepConfig::gershgorin(topo, rho, cfg.step.tau_safety, cfg.step.tau_max, gamma).map_err(numerical)?;
    let sk = Seeker::new(inst, &maps, step, cfg.inner)
        .map_err(numerical)?
        .with_parallel(cfg.parallel);
    let learn = cfg.mode == Mode::Learn;

    let oracle_sol = oracle::solve_vi_centralized(inst, 1e-10).ok();
    let reference = oracle_sol.as_ref().map(|s| split_plain(topo, &s.x_vec()));

    let n = topo.player_count();
    let mut inner_rngs: Vec<ChaCha8Rng> = (0..n).map(|i| rng::stream(cfg.seed, i, Purpose::Inner)).collect();
    let mut ls = if learn { Some(LearnState::new(cfg, inst)?) } else { None };
    let closed = matches!(cfg.inner, InnerSolver::ClosedForm);

    let mut y = sk.initial_point();
    let mut rows = Vec::new();
    let mut trace = Vec::with_capacity(cfg.iters);
    let mut summ = (0.0, 0.0, 0.0);
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.iters {
        let w: Vec<DVector<f64>> = match &ls {
            Some(l) => l.beliefs.clone(),
            None => inst.truths().to_vec(),
        };
        let yt = sk.resolvent(&y, &w, k, &mut inner_rngs).map_err(numerical)?;
        let g = gamma.at(k);
        let y_next = seeker::km_update(&y, &yt, g).map_err(numerical)?;
        let cur = own_blocks(topo, &maps, &y);
        let nxt = own_blocks(topo, &maps, &y_next);
        let dist = reference.as_ref().map(|r| dist_to(&cur, r));
        let srel = step_rel(&nxt, &cur);
        let perr = ls.as_ref().map(|l| metrics::mean_param_error(&l.beliefs, inst.truths()));
        let at_row = k % cfg.metrics_every == 0;
        let need_residual = at_row || cfg.tol > 0.0;
        let residual = if !need_residual {
            f64::NAN
        } else if closed {
            sk.phi.norm(&(&y - &yt))
        } else {
            sk.residual(&y, &w).map_err(numerical)?
        };
        let stop = cfg.tol > 0.0 && residual < cfg.tol;
        if at_row || stop {
            let (we, be) = match &ls {
                Some(l) => {
                    let (a, b) = metrics::parameter_errors(&l.beliefs, inst.truths());
                    (Some(a), Some(b))
                }
                None => (None, None),
            };
            rows.push(MetricsRow {
                k,
                dist_sne: dist,
                step_rel: srel,
                weight_err: we,
                bias_err: be,
                residual,
                min_gram_eig: ls
                    .as_ref()
                    .map(|l| l.logs.iter().map(|g| g.min_eig()).fold(f64::INFINITY, f64::min)),
                skips: ls.as_ref().map_or(0, |l| l.logs.iter().map(|g| g.skips).sum()),
            });
        }
        if stop {
            trace.push(TracePoint {
                k,
                dist_sne: dist,
                step_rel: srel,
                param_err: perr,
                increment: 0.0,
            });
            converged = true;
            iterations = k;
            break;
        }
        let increment = match &mut ls {
            Some(l) => l.update(inst, &nxt, cfg.parallel)?,
            None => 0.0,
        };
        summ.0 += g * increment;
        if k < cfg.iters / 2 {
            summ.1 += g * increment;
        }
        summ.2 = increment;
        trace.push(TracePoint {
            k,
            dist_sne: dist,
            step_rel: srel,
            param_err: perr,
            increment,
        });
        y = y_next;
        iterations = k + 1;
    }

    let beliefs = match &ls {
        Some(l) => l.beliefs.clone(),
        None => inst.truths().to_vec(),
    };
    if !converged && cfg.tol > 0.0 {
        converged = sk.residual(&y, &beliefs).map_err(numerical)? < cfg.tol;
    }
    let decay = ls.as_ref().and_then(|_| {
        let hist: Vec<(usize, f64, f64)> = trace
            .iter()
            .filter_map(|t| t.param_err.map(|e| (t.k.max(1), e, t.increment)))
            .collect();
        estimator::decay_diagnostics(&hist, cfg.estimator.window).ok()
    });
    let identifiability = match &ls {
        Some(l) => (0..n)
            .map(|i| estimator::identifiability_diagnostic(&l.logs[i], inst, &l.exploration, i))
            .collect(),
        None => vec![],
    };
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: cfg.mode,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        iterations,
        converged,
        rho,
        phi_min_eig: sk.phi.sigma_min,
        oracle: oracle_sol.as_ref().map(|s| OracleInfo {
            method: s.method,
            residual: s.residual,
            certified: s.certified,
        }),
        final_row: rows.last().cloned(),
        consensus_gap: maps.layout.consensus_gap(topo, &y),
        warmup: warmup(&rows),
        summability: ls.as_ref().map(|_| Summability {
            sum: summ.0,
            half_sum: summ.1,
            last_increment: summ.2,
        }),
        exploration_bound: ls
            .as_ref()
            .map(|l| l.exploration.iter().map(|e| e.delta_bar()).fold(0.0, f64::max)),
        identifiability,
        decay,
        kkt: None,
    };
    Ok(RunOutput {
        rows,
        trace,
        summary,
        y,
        beliefs,
        reference: oracle_sol.map(|s| s.x_vec()),
    })
}

fn warmup(rows: &[MetricsRow]) -> WarmupInfo {
    let r = rows.len().min(WARMUP_ROWS);
    WarmupInfo {
        rows: r,
        through_k: r.checked_sub(1).map(|i| rows[i].k),
    }
}

fn run_gnep(cfg: &RunConfig, inst: &GameInstance) -> Result<RunOutput, RunError> {
    let block = cfg.gnep.as_ref().expect("validated");
    let topo = inst.topology();
    let maps = StructuralMaps::new(topo);
    let coupling = Coupling::from_spec(&block.coupling, topo)
        .map_err(|e| ConfigError::schema("<config>", "gnep.coupling", e.to_string()))?;
    let rho = pick_rho(cfg, inst, &maps)?;
    let taus = GnepTaus::gershgorin(topo, &maps, &coupling, rho, block.tau_safety);
    let solver = GnepSolver::new(inst, &maps, &coupling, rho, taus).map_err(numerical)?;
    let gamma = gamma_of(cfg);

    let oracle_sol = oracle::gnep_kkt_oracle(inst, &coupling, 1e-9).ok();
    let reference = oracle_sol.as_ref().map(|s| split_plain(topo, &s.x_vec()));

    let mut shadow = solver.initial_state();
    let mut prev: Option<Vec<DVector<f64>>> = None;
    let mut rows = Vec::new();
    let mut trace = Vec::with_capacity(cfg.iters);
    let mut last = None;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.iters {
        // The iteration relaxes by 2γ; the schedule value is that coefficient.
        let out = solver.dr_step(&shadow, inst.truths(), 0.5 * gamma.at(k)).map_err(numerical)?;
        let cur = own_blocks(topo, &maps, &out.point.y);
        let srel = prev.as_ref().map_or(0.0, |p| step_rel(&cur, p));
        let dist = reference.as_ref().map(|r| dist_to(&cur, r));
        let stop = cfg.tol > 0.0 && out.residual < cfg.tol;
        if k % cfg.metrics_every == 0 || stop {
            rows.push(MetricsRow {
                k,
                dist_sne: dist,
                step_rel: srel,
                weight_err: None,
                bias_err: None,
                residual: out.residual,
                min_gram_eig: None,
                skips: 0,
            });
        }
        trace.push(TracePoint {
            k,
            dist_sne: dist,
            step_rel: srel,
            param_err: None,
            increment: 0.0,
        });
        shadow = out.shadow.clone();
        prev = Some(cur);
        last = Some(out);
        iterations = k + 1;
        if stop {
            converged = true;
            break;
        }
    }
    let kkt = last.as_ref().map(|o| solver.kkt_report(o));
    let y = last
        .as_ref()
        .map(|o| o.reflected.y.clone())
        .unwrap_or_else(|| shadow.y.clone());
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: cfg.mode,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        iterations,
        converged,
        rho,
        phi_min_eig: solver.phi_min_eig,
        oracle: oracle_sol.as_ref().map(|s| OracleInfo {
            method: s.method,
            residual: s.residual,
            certified: s.certified,
        }),
        final_row: rows.last().cloned(),
        consensus_gap: maps.layout.consensus_gap(topo, &y),
        warmup: warmup(&rows),
        summability: None,
        exploration_bound: None,
        identifiability: vec![],
        decay: None,
        kkt,
    };
    Ok(RunOutput {
        rows,
        trace,
        summary,
        y,
        beliefs: inst.truths().to_vec(),
        reference: oracle_sol.map(|s| s.x_vec()),
    })
}

/// Writes `metrics.csv`, `summary.json` and `instance.json` into `dir`.
pub fn write_outputs(dir: &Path, inst: &GameInstance, out: &RunOutput) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let f = std::fs::File::create(dir.join("metrics.csv")).map_err(io)?;
    metrics::write_csv(std::io::BufWriter::new(f), &out.rows).map_err(|e| RunError::Io(e.to_string()))?;
    let summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    std::fs::write(dir.join("summary.json"), summary + "\n").map_err(io)?;
    let instance = serde_json::to_string_pretty(inst).expect("instance serializes");
    std::fs::write(dir.join("instance.json"), instance + "\n").map_err(io)?;
    Ok(())
}
