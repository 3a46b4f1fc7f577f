//! Run configuration: a single JSON document, strictly validated.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::games::{CournotGenerator, GameInstance, InstanceSpec};
use crate::gnep::CouplingSpec;
use crate::seeker::{GammaSchedule, InnerSolver};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: field `{field}`: {message}")]
    Schema { path: String, field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn schema(path: &str, field: &str, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            path: path.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Learn,
    Gnep,
}

/// Where the game comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Inline(Box<InstanceSpec>),
    Generated {
        seed: u64,
        #[serde(default)]
        generator: CournotGenerator,
    },
    /// Path to an instance JSON file, relative to the config file.
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoRule {
    /// Sufficient bound from the monotonicity constants.
    Auto,
    /// Smallest value making the seeking operator monotone.
    Monotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoChoice {
    Rule(RhoRule),
    Value(f64),
}

impl Default for RhoChoice {
    fn default() -> Self {
        RhoChoice::Rule(RhoRule::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepBlock {
    #[serde(default)]
    pub rho: RhoChoice,
    #[serde(default = "default_margin")]
    pub rho_margin: f64,
    #[serde(default = "default_safety")]
    pub tau_safety: f64,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSchedule>,
}

fn default_margin() -> f64 {
    1.05
}
fn default_safety() -> f64 {
    0.9
}
fn default_tau_max() -> f64 {
    1.0
}

impl Default for StepBlock {
    fn default() -> Self {
        StepBlock {
            rho: RhoChoice::default(),
            rho_margin: default_margin(),
            tau_safety: default_safety(),
            tau_max: default_tau_max(),
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplorationRule {
    /// `δ_i = scale/(2√n_i)·min_j X_ij,max`.
    Scaled {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// One `δ_i` per player.
    Explicit { delta: Vec<f64> },
}

fn default_scale() -> f64 {
    0.01
}

impl Default for ExplorationRule {
    fn default() -> Self {
        ExplorationRule::Scaled { scale: default_scale() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamBoxRule {
    /// Boxes stored with the instance, or the instance default.
    Instance,
    /// The degenerate box `{w*}`: learning is vacuous.
    Truth,
    /// `[w − below·|w|, w + above·|w|]` with `|w|` read as 1 at zero.
    Relative { below: f64, above: f64 },
}

impl Default for ParamBoxRule {
    fn default() -> Self {
        ParamBoxRule::Instance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    #[serde(default)]
    pub exploration: ExplorationRule,
    #[serde(default)]
    pub param_boxes: ParamBoxRule,
    /// Iteration window `[lo, hi]` of the decay diagnostic.
    #[serde(default = "default_window")]
    pub window: (usize, usize),
}

fn default_window() -> (usize, usize) {
    (1_000, 20_000)
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        EstimatorBlock {
            exploration: ExplorationRule::default(),
            param_boxes: ParamBoxRule::default(),
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnepBlock {
    pub coupling: CouplingSpec,
    /// Safety factor applied to the diagonal-dominance step bounds.
    #[serde(default = "default_safety")]
    pub tau_safety: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub instance: InstanceSource,
    #[serde(default)]
    pub step: StepBlock,
    #[serde(default)]
    pub estimator: EstimatorBlock,
    #[serde(default)]
    pub inner: InnerSolver,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnep: Option<GnepBlock>,
    pub iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_every")]
    pub metrics_every: usize,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_tol() -> f64 {
    0.0
}
fn default_every() -> usize {
    10
}

impl RunConfig {
    /// Parses and validates a config document; `origin` names it in errors.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| serde_error(origin, &e))?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn validate(&self, origin: &str) -> Result<(), ConfigError> {
        let err = |f: &str, m: &str| Err(ConfigError::schema(origin, f, m));
        if matches!(self.mode, Mode::Learn | Mode::Gnep) && self.step.gamma.is_none() {
            return err("step.gamma", "required in learn and gnep modes");
        }
        if let Some(g) = self.step.gamma {
            if let Err(e) = g.validate() {
                return err("step.gamma", &e.to_string());
            }
        }
        if self.mode == Mode::Gnep && self.gnep.is_none() {
            return err("gnep", "required in gnep mode");
        }
        if self.metrics_every == 0 {
            return err("metrics_every", "must be at least 1");
        }
        if !(self.tol >= 0.0) {
            return err("tol", "must be nonnegative");
        }
        if let RhoChoice::Value(r) = self.step.rho {
            if !(r > 0.0 && r.is_finite()) {
                return err("step.rho", "must be positive");
            }
        }
        if !(self.step.rho_margin >= 1.0) {
            return err("step.rho_margin", "must be at least 1");
        }
        if !(self.step.tau_safety > 0.0 && self.step.tau_safety < 1.0) {
            return err("step.tau_safety", "must lie in (0, 1)");
        }
        if !(self.step.tau_max > 0.0) {
            return err("step.tau_max", "must be positive");
        }
        if let Some(g) = &self.gnep {
            if !(g.tau_safety > 0.0 && g.tau_safety < 1.0) {
                return err("gnep.tau_safety", "must lie in (0, 1)");
            }
        }
        if let InnerSolver::Psg { schedule } = self.inner {
            if let Err(e) = schedule.validate() {
                return err("inner.schedule", &e.to_string());
            }
        }
        let (lo, hi) = self.estimator.window;
        if lo > hi {
            return err("estimator.window", "lower end exceeds upper end");
        }
        match &self.estimator.exploration {
            ExplorationRule::Scaled { scale } if !(*scale >= 0.0) => err("estimator.exploration.scale", "must be nonnegative"),
            ExplorationRule::Explicit { delta } if delta.iter().any(|d| !(*d >= 0.0)) => {
                err("estimator.exploration.delta", "must be nonnegative")
            }
            _ => Ok(()),
        }?;
        if let ParamBoxRule::Relative { below, above } = self.estimator.param_boxes {
            if !(below >= 0.0 && above >= 0.0) {
                return err("estimator.param_boxes", "slacks must be nonnegative");
            }
        }
        Ok(())
    }

    /// Canonical JSON: keys sorted, floats in shortest round-trip form.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds the instance. `base` resolves relative instance paths.
    pub fn load_instance(&self, base: Option<&Path>, origin: &str) -> Result<GameInstance, ConfigError> {
        match &self.instance {
            InstanceSource::Inline(spec) => GameInstance::try_from((**spec).clone())
                .map_err(|e| ConfigError::schema(origin, "instance.inline", e.to_string())),
            InstanceSource::Generated { seed, generator } => crate::games::sample_instance(*seed, generator)
                .map_err(|e| ConfigError::schema(origin, "instance.generated", e.to_string())),
            InstanceSource::File(p) => {
                let path = match base {
                    Some(b) => b.join(p),
                    None => Path::new(p).to_path_buf(),
                };
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| serde_error(&path.display().to_string(), &e))
            }
        }
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::from_json(&text, &path.display().to_string())
}

fn serde_error(origin: &str, e: &serde_json::Error) -> ConfigError {
    let msg = e.to_string();
    let field = ["missing field `", "unknown field `", "unknown variant `"]
        .iter()
        .find_map(|p| {
            let start = msg.find(p)? + p.len();
            let end = msg[start..].find('`')? + start;
            Some(msg[start..end].to_string())
        })
        .unwrap_or_else(|| "<document>".to_string());
    ConfigError::Schema {
        path: format!("{origin}:{}:{}", e.line(), e.column()),
        field,
        message: msg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LQ: &str = r#"{
        "mode": "learn",
        "instance": {"inline": {
            "topology": {"players": 2, "dims": [1, 1], "edges": [[0, 1], [1, 0]]},
            "game": {"kind": "scalar_lq", "k": [0.5, 0.5], "a": [1, 1], "weights": [[0, 1], [1, 0]]},
            "boxes": [{"lower": [0], "upper": [10]}, {"lower": [0], "upper": [10]}]
        }},
        "step": {"gamma": {"power": 0.501}},
        "iters": 10
    }"#;

    #[test]
    fn round_trip_keeps_hash() {
        let a = RunConfig::from_json(LQ, "lq").unwrap();
        let b = RunConfig::from_json(&a.canonical_json(), "lq").unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn learn_mode_requires_gamma() {
        let text = LQ.replace(r#""step": {"gamma": {"power": 0.501}},"#, "");
        let e = RunConfig::from_json(&text, "lq").unwrap_err();
        assert_eq!(e.field(), Some("step.gamma"));
    }

    #[test]
    fn unknown_fields_are_named() {
        let text = LQ.replace(r#""iters": 10"#, r#""iters": 10, "itres": 3"#);
        let e = RunConfig::from_json(&text, "lq").unwrap_err();
        assert_eq!(e.field(), Some("itres"));
        assert!(e.to_string().contains("lq:"));
    }

    #[test]
    fn rho_forms() {
        for (s, want) in [
            (r#""auto""#, RhoChoice::Rule(RhoRule::Auto)),
            (r#""monotone""#, RhoChoice::Rule(RhoRule::Monotone)),
            ("2.5", RhoChoice::Value(2.5)),
        ] {
            let r: RhoChoice = serde_json::from_str(s).unwrap();
            assert_eq!(r, want);
        }
    }
}
