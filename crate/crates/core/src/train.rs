//! The alternating two-goal training loop and the classification-only baseline.
//!
//! Per epoch, `n1` outer iterations each run one critic update on a fixed-class
//! source batch A against a random source batch B, followed by `n2` inner
//! steps. Each inner step draws a target batch C and takes a classification
//! step on the extractor and classifier, then a Wasserstein step on the
//! extractor alone. The baseline runs the same loop without the critic and
//! without the Wasserstein step.

use std::fmt;
use std::fs;
use std::hash::{DefaultHasher, Hasher};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::checkpoint;
use crate::codec::CodecError;
use crate::config::{CriticSign, RunConfig};
use crate::data::{sample_batch_a, sample_batch_b, sample_batch_c, DataError, LabeledDataset, NuisanceDataset};
use crate::nn::{Mlp, ModelParams, NnError};
use crate::objectives::{critic_objective, cross_entropy_loss, wasserstein_loss, ObjectiveError};
use crate::optimizers::{AdamState, Direction, OptimError, SgdState, StepLrSchedule};
use crate::scalar::Scalar;

const STREAM_BATCH_A: u64 = 11;
const STREAM_BATCH_B: u64 = 12;
const STREAM_BATCH_C: u64 = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Purified,
    Goal1Only,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Critic,
    Goal1,
    Goal2,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Critic => "critic update",
            Phase::Goal1 => "classification update",
            Phase::Goal2 => "wasserstein update",
        })
    }
}

/// Position in the loop. `inner` is `None` for critic updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepContext {
    pub epoch: usize,
    pub outer: usize,
    pub inner: Option<usize>,
}

/// Failure of a single update, before loop context is attached.
#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error("{phase} failed at epoch {}, outer step {}{}: {source}", .ctx.epoch, .ctx.outer, .ctx.inner.map(|i| format!(", inner step {i}")).unwrap_or_default())]
    Numerical {
        phase: Phase,
        ctx: StepContext,
        source: StepError,
    },
    #[error("non-finite {what} at epoch {epoch}")]
    NonFiniteMetric { what: &'static str, epoch: usize },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Io(#[from] CodecError),
}

/// Objective value of an update and the Euclidean norm of its gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport<T> {
    pub value: T,
    pub grad_norm: T,
}

fn grad_norm<T: Scalar>(grads: &[Tensor<T>]) -> T {
    grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|&v| v * v)
        .sum::<T>()
        .sqrt()
}

/// One Adam ascent step on the critic objective with the extractor frozen,
/// followed by clipping. Returns the objective before the step.
#[allow(clippy::too_many_arguments)]
pub fn critic_update<T: Scalar>(
    model: &mut ModelParams<T>,
    batch_a: &Tensor<T>,
    batch_b: &Tensor<T>,
    adam: &mut AdamState<T>,
    clip: T,
    clip_biases: bool,
    sign: CriticSign,
) -> Result<StepReport<T>, StepError> {
    let ra = model.represent(batch_a)?;
    let rb = model.represent(batch_b)?;
    let mut tape = Tape::new();
    let critic = model.critic.bind(&mut tape, true);
    let (va, vb) = (tape.constant(ra), tape.constant(rb));
    let sa = critic.forward(&mut tape, va)?;
    let sb = critic.forward(&mut tape, vb)?;
    let (first, second) = match sign {
        CriticSign::AMinusB => (sa, sb),
        CriticSign::BMinusA => (sb, sa),
    };
    let obj = critic_objective(&mut tape, first, second)?;
    let g = tape.backward(obj.var)?;
    let grads = critic.grads(&g);
    let report = StepReport {
        value: obj.value,
        grad_norm: grad_norm(&grads),
    };
    adam.step(&mut model.critic.params_mut(), &grads, Direction::Ascent)?;
    model.critic.clip_weights(clip, clip_biases)?;
    Ok(report)
}

/// One SGD step on `λ₁ · cross-entropy` for extractor and classifier together.
/// `sgd` must track the extractor's parameters followed by the classifier's.
pub fn goal1_update<T: Scalar>(
    model: &mut ModelParams<T>,
    x: &Tensor<T>,
    labels: &[usize],
    lambda1: T,
    sgd: &mut SgdState<T>,
) -> Result<StepReport<T>, StepError> {
    let mut tape = Tape::new();
    let ext = model.extractor.bind(&mut tape, true);
    let cls = model.classifier.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let r = ext.forward(&mut tape, xv)?;
    let logits = cls.forward(&mut tape, r)?;
    let ce = cross_entropy_loss(&mut tape, logits, labels)?;
    let root = tape.scale(ce.var, lambda1)?;
    let g = tape.backward(root)?;
    let mut grads = ext.grads(&g);
    grads.extend(cls.grads(&g));
    let report = StepReport {
        value: ce.value,
        grad_norm: grad_norm(&grads),
    };
    let mut params = model.extractor.params_mut();
    params.extend(model.classifier.params_mut());
    sgd.step(&mut params, &grads)?;
    Ok(report)
}

/// One SGD step on `λ₂ · (−mean f_d(f_e(x)))` for the extractor only.
pub fn goal2_update<T: Scalar>(
    model: &mut ModelParams<T>,
    x: &Tensor<T>,
    lambda2: T,
    sgd: &mut SgdState<T>,
) -> Result<StepReport<T>, StepError> {
    let mut tape = Tape::new();
    let ext = model.extractor.bind(&mut tape, true);
    let critic = model.critic.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let r = ext.forward(&mut tape, xv)?;
    let scores = critic.forward(&mut tape, r)?;
    let w = wasserstein_loss(&mut tape, scores)?;
    let root = tape.scale(w.var, lambda2)?;
    let g = tape.backward(root)?;
    let grads = ext.grads(&g);
    let report = StepReport {
        value: w.value,
        grad_norm: grad_norm(&grads),
    };
    sgd.step(&mut model.extractor.params_mut(), &grads)?;
    Ok(report)
}

/// Hash of a network's parameter bits.
pub fn param_hash<T: Scalar>(net: &Mlp<T>) -> u64 {
    let mut h = DefaultHasher::new();
    for p in net.params() {
        for d in p.shape() {
            h.write_usize(*d);
        }
        for v in p.data() {
            h.write_u64(v.as_f64().to_bits());
        }
    }
    h.finish()
}

/// Hooks around every update, for progress reporting and invariant checks.
pub trait Observer<T> {
    fn before(&mut self, _phase: Phase, _ctx: StepContext, _model: &ModelParams<T>) {}
    fn after(&mut self, _phase: Phase, _ctx: StepContext, _model: &ModelParams<T>) {}
    fn epoch_end(&mut self, _metrics: &[EpochMetrics]) {}
}

pub struct NoObserver;

impl<T> Observer<T> for NoObserver {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Heldout,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Heldout => "heldout",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    /// Mean cross-entropy over the split.
    pub loss_cls: f64,
    /// Negative mean critic score over the split (0 for the baseline).
    pub loss_w: f64,
    /// Mean critic objective over the epoch's critic updates (0 for the baseline).
    pub critic_obj: f64,
    pub accuracy: f64,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "epoch,split,loss_cls,loss_w,critic_obj,accuracy,lr";

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.split, r.loss_cls, r.loss_w, r.critic_obj, r.accuracy, r.lr
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub mode: Mode,
    pub final_model: ModelParams<T>,
    /// Highest held-out accuracy, earliest epoch on ties.
    pub best_model: ModelParams<T>,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub n1: usize,
    /// `None` for the baseline.
    pub y1: Option<usize>,
    pub critic_updates: usize,
    /// Largest critic coordinate seen right after any critic update.
    pub max_critic_abs: f64,
}

impl<T: Scalar> TrainOutcome<T> {
    /// `cfg` with `n1` and `y1` filled in as this run resolved them.
    pub fn resolved_config(&self, cfg: &RunConfig) -> RunConfig {
        RunConfig {
            n1: Some(self.n1),
            y1: self.y1.or(cfg.y1),
            ..cfg.clone()
        }
    }

    /// Writes `metrics.csv`, `final.plm` and `best.plm` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CodecError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), metrics_csv(&self.metrics))?;
        checkpoint::save(&self.final_model, &dir.join("final.plm"))?;
        checkpoint::save(&self.best_model, &dir.join("best.plm"))?;
        Ok(())
    }
}

pub fn train_purified<T: Scalar>(
    cfg: &RunConfig,
    target: &LabeledDataset,
    source: &NuisanceDataset,
    observer: &mut dyn Observer<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    run(cfg, target, Some(source), observer)
}

pub fn train_goal1_only<T: Scalar>(
    cfg: &RunConfig,
    target: &LabeledDataset,
    observer: &mut dyn Observer<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    run(cfg, target, None, observer)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn run<T: Scalar>(
    cfg: &RunConfig,
    target: &LabeledDataset,
    source: Option<&NuisanceDataset>,
    observer: &mut dyn Observer<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    let mode = if source.is_some() {
        Mode::Purified
    } else {
        Mode::Goal1Only
    };
    let (train_part, heldout) = target.split_holdout(cfg.holdout, cfg.seed);
    if train_part.is_empty() {
        return Err(TrainError::Config("training split is empty".into()));
    }
    let spec = cfg.model_spec(target.feat_dim(), target.num_classes());
    let mut model = ModelParams::<T>::init(&spec, cfg.seed)?;
    let n1 = cfg.resolved_n1(train_part.len());

    let y1 = match source {
        Some(src) => {
            if src.inner().feat_dim() != target.feat_dim() {
                return Err(TrainError::Config(format!(
                    "source has {} features, target {}",
                    src.inner().feat_dim(),
                    target.feat_dim()
                )));
            }
            let y1 = cfg.y1.unwrap_or_else(|| src.most_frequent_class());
            if y1 >= src.num_nuisance() {
                return Err(TrainError::Config(format!(
                    "y1 = {y1} but the source has {} nuisance classes",
                    src.num_nuisance()
                )));
            }
            Some(y1)
        }
        None => None,
    };

    let mut rng_a = stream(cfg.seed, STREAM_BATCH_A);
    let mut rng_b = stream(cfg.seed, STREAM_BATCH_B);
    let mut rng_c = stream(cfg.seed, STREAM_BATCH_C);

    let lit = T::lit;
    let mut adam = AdamState::with_betas(
        &model.critic.params(),
        lit(cfg.alpha1),
        lit(cfg.adam_beta1),
        lit(cfg.adam_beta2),
        lit(cfg.adam_eps),
    );
    let mut joint = model.extractor.params();
    joint.extend(model.classifier.params());
    let mut sgd_goal1 = SgdState::new(&joint, lit(cfg.alpha2), lit(cfg.momentum));
    let mut sgd_goal2 = SgdState::new(&model.extractor.params(), lit(cfg.alpha2), lit(cfg.momentum));
    let schedule = StepLrSchedule::new(cfg.alpha2, cfg.steplr_step, cfg.steplr_gamma);
    let (lambda1, lambda2, clip) = (lit(cfg.lambda1), lit(cfg.lambda2), lit(cfg.clip));

    let mut metrics = Vec::with_capacity(cfg.epochs * 2);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut critic_updates = 0;
    let mut max_critic_abs = 0.0f64;

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch);
        sgd_goal1.lr = lit(lr);
        sgd_goal2.lr = lit(lr);
        let mut critic_sum = 0.0;
        let mut critic_count = 0usize;

        for outer in 0..n1 {
            if let (Some(src), Some(y1)) = (source, y1) {
                let ctx = StepContext {
                    epoch,
                    outer,
                    inner: None,
                };
                let a = sample_batch_a::<T>(src, y1, cfg.m, &mut rng_a)?;
                let b = sample_batch_b::<T>(src, cfg.m, &mut rng_b)?;
                observer.before(Phase::Critic, ctx, &model);
                let rep = critic_update(
                    &mut model,
                    &a.x,
                    &b.x,
                    &mut adam,
                    clip,
                    cfg.clip_biases,
                    cfg.critic_sign,
                )
                .map_err(|source| TrainError::Numerical {
                    phase: Phase::Critic,
                    ctx,
                    source,
                })?;
                observer.after(Phase::Critic, ctx, &model);
                critic_sum += rep.value.as_f64();
                critic_count += 1;
                critic_updates += 1;
                max_critic_abs = max_critic_abs.max(model.critic.max_abs_weight(cfg.clip_biases).as_f64());
            }

            for inner in 0..cfg.n2 {
                let ctx = StepContext {
                    epoch,
                    outer,
                    inner: Some(inner),
                };
                let c = sample_batch_c::<T>(&train_part, cfg.m, &mut rng_c)?;
                let wrap = |phase| move |source| TrainError::Numerical { phase, ctx, source };

                observer.before(Phase::Goal1, ctx, &model);
                goal1_update(&mut model, &c.x, &c.labels, lambda1, &mut sgd_goal1).map_err(wrap(Phase::Goal1))?;
                observer.after(Phase::Goal1, ctx, &model);

                if mode == Mode::Purified {
                    observer.before(Phase::Goal2, ctx, &model);
                    goal2_update(&mut model, &c.x, lambda2, &mut sgd_goal2).map_err(wrap(Phase::Goal2))?;
                    observer.after(Phase::Goal2, ctx, &model);
                }
            }
        }

        let critic_obj = if critic_count > 0 {
            critic_sum / critic_count as f64
        } else {
            0.0
        };
        let start = metrics.len();
        for (split, ds) in [(Split::Train, &train_part), (Split::Heldout, &heldout)] {
            if ds.is_empty() {
                continue;
            }
            let row = split_metrics(&model, ds, mode, epoch, split, critic_obj, lr)?;
            metrics.push(row);
        }
        let select = metrics[start..]
            .iter()
            .find(|r| r.split == Split::Heldout)
            .unwrap_or(&metrics[start])
            .accuracy;
        if best.as_ref().is_none_or(|(acc, _, _)| select > *acc) {
            best = Some((select, epoch, model.clone()));
        }
        observer.epoch_end(&metrics[start..]);
    }

    let (best_epoch, best_model) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, model.clone()),
    };
    Ok(TrainOutcome {
        mode,
        final_model: model,
        best_model,
        best_epoch,
        metrics,
        n1,
        y1,
        critic_updates,
        max_critic_abs,
    })
}

fn split_metrics<T: Scalar>(
    model: &ModelParams<T>,
    ds: &LabeledDataset,
    mode: Mode,
    epoch: usize,
    split: Split,
    critic_obj: f64,
    lr: f64,
) -> Result<EpochMetrics, TrainError> {
    let reps = analysis::dataset_representations(model, ds)?;
    let logits = model.logits(&reps)?;
    let accuracy = analysis::accuracy_of(&analysis::predictions(&logits), ds.labels());
    let loss_cls = mean_cross_entropy(&logits, ds.labels());
    let loss_w = match mode {
        Mode::Purified => {
            let scores = model.scores(&reps)?;
            -scores.data().iter().map(|v| v.as_f64()).sum::<f64>() / scores.len() as f64
        }
        Mode::Goal1Only => 0.0,
    };
    for (what, v) in [("classification loss", loss_cls), ("wasserstein loss", loss_w)] {
        if !v.is_finite() {
            return Err(TrainError::NonFiniteMetric { what, epoch });
        }
    }
    Ok(EpochMetrics {
        epoch,
        split,
        loss_cls,
        loss_w,
        critic_obj,
        accuracy,
        lr,
    })
}

fn mean_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[u16]) -> f64 {
    let (rows, _) = logits.dims2().expect("logits are a matrix");
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate().take(rows) {
        let row: Vec<f64> = logits.row(i).iter().map(|v| v.as_f64()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y as usize];
    }
    total / rows as f64
}
