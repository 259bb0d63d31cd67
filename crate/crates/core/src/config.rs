//! Run configuration: generator knobs, architecture and training hyperparameters.
//!
//! Loaded from TOML. Unknown keys are rejected, missing keys take the
//! defaults below. `n1` and `y1` may be left unset and are resolved from the
//! data at training time.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SyntheticGenConfig;
use crate::nn::{ModelSpec, CRITIC_HIDDEN, DEFAULT_EXTRACTOR_HIDDEN, REP_DIM};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which difference of batch means the critic ascends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticSign {
    /// `mean f_d(A) − mean f_d(B)`
    #[default]
    AMinusB,
    /// `mean f_d(B) − mean f_d(A)`
    BMinusA,
}

impl CriticSign {
    pub fn factor(self) -> f64 {
        match self {
            CriticSign::AMinusB => 1.0,
            CriticSign::BMinusA => -1.0,
        }
    }
}

impl fmt::Display for CriticSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriticSign::AMinusB => "a_minus_b",
            CriticSign::BMinusA => "b_minus_a",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,

    // synthetic data
    pub n_train: usize,
    pub n_test: usize,
    pub n_source: usize,
    #[serde(rename = "C")]
    pub num_classes: usize,
    #[serde(rename = "n")]
    pub num_nuisance: usize,
    pub d_task: usize,
    pub d_nuis: usize,
    pub sigma: f64,
    pub rho: f64,
    pub proto_scale: f64,
    pub nuis_scale: f64,

    // architecture
    pub extractor_hidden: Vec<usize>,

    // optimisation
    /// Critic (Adam) learning rate.
    pub alpha1: f64,
    /// Extractor/classifier (SGD) learning rate.
    pub alpha2: f64,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    pub n2: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub clip: f64,
    pub clip_biases: bool,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y1: Option<usize>,
    pub critic_sign: CriticSign,
    pub momentum: f64,
    pub steplr_step: usize,
    pub steplr_gamma: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Fraction of the training set held out for checkpoint selection.
    pub holdout: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = SyntheticGenConfig::default();
        Self {
            seed: g.seed,
            n_train: g.n_train,
            n_test: g.n_test,
            n_source: g.n_source,
            num_classes: g.num_classes,
            num_nuisance: g.num_nuisance,
            d_task: g.d_task,
            d_nuis: g.d_nuis,
            sigma: g.sigma,
            rho: g.rho,
            proto_scale: g.proto_scale,
            nuis_scale: g.nuis_scale,
            extractor_hidden: DEFAULT_EXTRACTOR_HIDDEN.to_vec(),
            alpha1: 0.001,
            alpha2: 0.001,
            m: 32,
            n1: None,
            n2: 3,
            lambda1: 1.0,
            lambda2: 1.0,
            clip: 0.1,
            clip_biases: true,
            epochs: 50,
            y1: None,
            critic_sign: CriticSign::AMinusB,
            momentum: 0.9,
            steplr_step: 7,
            steplr_gamma: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            holdout: 0.1,
        }
    }
}

/// Every key with a one-line description, for `--help` output.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("seed", "master seed for data, init and sampling (0)"),
    ("n_train", "biased training samples (2000)"),
    ("n_test", "unbiased test samples (10000)"),
    ("n_source", "nuisance-labelled source samples (20000)"),
    ("C", "task classes (10)"),
    ("n", "nuisance classes (5)"),
    ("d_task", "task feature width (32)"),
    ("d_nuis", "nuisance feature width (32)"),
    ("sigma", "feature noise std (0.5)"),
    ("rho", "train bias correlation (0.95)"),
    ("proto_scale", "norm of task prototypes (5.0)"),
    ("nuis_scale", "norm of nuisance prototypes (8.0)"),
    ("extractor_hidden", "extractor hidden widths ([256, 256])"),
    ("alpha1", "critic Adam learning rate (0.001)"),
    ("alpha2", "extractor/classifier SGD learning rate (0.001)"),
    ("m", "batch size (32)"),
    ("n1", "outer iterations per epoch (auto: ceil(train/m))"),
    ("n2", "inner steps per outer iteration (3)"),
    ("lambda1", "classification loss weight (1.0)"),
    ("lambda2", "Wasserstein loss weight (1.0)"),
    ("clip", "critic weight clip (0.1)"),
    ("clip_biases", "also clip critic biases (true)"),
    ("epochs", "training epochs (50)"),
    ("y1", "fixed nuisance class for batch A (auto: most frequent)"),
    ("critic_sign", "a_minus_b or b_minus_a (a_minus_b)"),
    ("momentum", "SGD momentum (0.9)"),
    ("steplr_step", "epochs between lr decays (7)"),
    ("steplr_gamma", "lr decay factor (0.1)"),
    ("adam_beta1", "Adam beta1 (0.9)"),
    ("adam_beta2", "Adam beta2 (0.999)"),
    ("adam_eps", "Adam epsilon (1e-8)"),
    ("holdout", "held-out fraction of the training set (0.1)"),
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        self.generator()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("clip", self.clip),
            ("adam_eps", self.adam_eps),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if v < 0.0 || !v.is_finite() {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.steplr_gamma > 0.0 && self.steplr_gamma <= 1.0) {
            return fail(format!("steplr_gamma must lie in (0, 1], got {}", self.steplr_gamma));
        }
        if !(self.holdout >= 0.0 && self.holdout < 1.0) {
            return fail(format!("holdout must lie in [0, 1), got {}", self.holdout));
        }
        if self.m == 0 || self.n2 == 0 || self.steplr_step == 0 {
            return fail("m, n2 and steplr_step must be at least 1".into());
        }
        if self.extractor_hidden.contains(&0) {
            return fail("extractor_hidden widths must be positive".into());
        }
        if let Some(y1) = self.y1 {
            if y1 >= self.num_nuisance {
                return fail(format!(
                    "y1 = {y1} but there are {} nuisance classes",
                    self.num_nuisance
                ));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> SyntheticGenConfig {
        SyntheticGenConfig {
            seed: self.seed,
            n_train: self.n_train,
            n_test: self.n_test,
            n_source: self.n_source,
            num_classes: self.num_classes,
            num_nuisance: self.num_nuisance,
            d_task: self.d_task,
            d_nuis: self.d_nuis,
            proto_scale: self.proto_scale,
            nuis_scale: self.nuis_scale,
            sigma: self.sigma,
            rho: self.rho,
        }
    }

    pub fn model_spec(&self, d_in: usize, n_classes: usize) -> ModelSpec {
        ModelSpec {
            d_in,
            n_classes,
            extractor_hidden: self.extractor_hidden.clone(),
            rep_dim: REP_DIM,
            critic_hidden: CRITIC_HIDDEN.to_vec(),
        }
    }

    /// Outer iterations per epoch for a training set of `n_train` samples.
    pub fn resolved_n1(&self, n_train: usize) -> usize {
        self.n1.unwrap_or_else(|| n_train.div_ceil(self.m))
    }
}
