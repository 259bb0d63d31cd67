//! Synthetic biased datasets, the `PLD1` file format, and the three
//! minibatch samplers used by the training loop.
//!
//! Every sample has a task block and a nuisance block of features. The
//! task block is a noisy copy of the prototype of its task class; the
//! nuisance block is a noisy copy of the prototype of its nuisance class.
//! In the training split the nuisance class follows the task class with
//! probability `rho`, which plants a spurious shortcut. The test and
//! source splits draw the nuisance class independently.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::codec::{put_f32s, put_u16, put_u32, to_u32, CodecError, FormatError, Reader};
use crate::scalar::Scalar;

const DATASET_MAGIC: &[u8; 4] = b"PLD1";
const LATENT_MAGIC: &[u8; 4] = b"LAT1";
const HEADER_LEN: usize = 18;
/// Resampling attempts before prototype separation is declared unsatisfiable.
const PROTOTYPE_ATTEMPTS: usize = 1000;
/// Minimum pairwise distance between unit-norm prototypes, before scaling.
pub const MIN_PROTOTYPE_SEPARATION: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("could not place {count} prototypes in {dim} dimensions {min_sep} apart after {attempts} attempts")]
    Separation {
        count: usize,
        dim: usize,
        min_sep: f64,
        attempts: usize,
    },
    #[error("nuisance class {0} has no samples")]
    EmptyClass(usize),
    #[error("dataset is empty")]
    Empty,
    #[error("dataset lacks {0} labels")]
    MissingLabels(&'static str),
    #[error("{what} label {label} out of range for {classes} classes (sample {index})")]
    LabelRange {
        what: &'static str,
        index: usize,
        label: u16,
        classes: u16,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl From<FormatError> for DataError {
    fn from(e: FormatError) -> Self {
        DataError::Codec(CodecError::Format(e))
    }
}

/// Per-sample generator ground truth stored alongside a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Latents {
    pub per_sample: usize,
    pub values: Vec<f32>,
}

/// A set of samples with a fixed feature width and optional label columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feat_dim: usize,
    features: Vec<f32>,
    task_labels: Option<Vec<u16>>,
    nuisance_labels: Option<Vec<u16>>,
    num_classes: u16,
    num_nuisance: u16,
    latents: Option<Latents>,
}

/// Latent slots written by the generator: task class, nuisance class.
pub const LATENT_TASK: usize = 0;
pub const LATENT_NUISANCE: usize = 1;

impl Dataset {
    pub fn new(
        feat_dim: usize,
        features: Vec<f32>,
        task_labels: Option<Vec<u16>>,
        nuisance_labels: Option<Vec<u16>>,
        num_classes: u16,
        num_nuisance: u16,
    ) -> Result<Self, DataError> {
        if feat_dim == 0 && !features.is_empty() {
            return Err(DataError::Config("zero feature width".into()));
        }
        let n = features.len().checked_div(feat_dim).unwrap_or(0);
        if n * feat_dim != features.len() {
            return Err(DataError::Config(format!(
                "{} feature values do not divide into rows of {}",
                features.len(),
                feat_dim
            )));
        }
        for (what, labels, classes) in [
            ("task", &task_labels, num_classes),
            ("nuisance", &nuisance_labels, num_nuisance),
        ] {
            if let Some(labels) = labels {
                if labels.len() != n {
                    return Err(DataError::Config(format!(
                        "{} {what} labels for {n} samples",
                        labels.len()
                    )));
                }
                if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
                    return Err(DataError::LabelRange {
                        what,
                        index,
                        label,
                        classes,
                    });
                }
            }
        }
        Ok(Self {
            feat_dim,
            features,
            task_labels,
            nuisance_labels,
            num_classes,
            num_nuisance,
            latents: None,
        })
    }

    pub fn with_latents(mut self, latents: Latents) -> Result<Self, DataError> {
        if latents.values.len() != latents.per_sample * self.len() {
            return Err(DataError::Config("latent block size mismatch".into()));
        }
        self.latents = Some(latents);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.task_labels
            .as_ref()
            .map(Vec::len)
            .or(self.nuisance_labels.as_ref().map(Vec::len))
            .unwrap_or(self.features.len().checked_div(self.feat_dim).unwrap_or(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes as usize
    }

    pub fn num_nuisance(&self) -> usize {
        self.num_nuisance as usize
    }

    pub fn features(&self, i: usize) -> &[f32] {
        &self.features[i * self.feat_dim..(i + 1) * self.feat_dim]
    }

    pub fn task_labels(&self) -> Option<&[u16]> {
        self.task_labels.as_deref()
    }

    pub fn nuisance_labels(&self) -> Option<&[u16]> {
        self.nuisance_labels.as_deref()
    }

    pub fn latents(&self) -> Option<&Latents> {
        self.latents.as_ref()
    }

    pub fn latent(&self, i: usize, slot: usize) -> Option<f32> {
        self.latents
            .as_ref()
            .filter(|l| slot < l.per_sample)
            .map(|l| l.values[i * l.per_sample + slot])
    }

    /// Rows `indices` as an `m×feat_dim` tensor.
    pub fn gather<T: Scalar>(&self, indices: &[usize]) -> Tensor<T> {
        let data = indices
            .iter()
            .flat_map(|&i| self.features(i).iter().map(|&v| T::lit(f64::from(v))))
            .collect();
        Tensor::new(vec![indices.len(), self.feat_dim], data).expect("stored features are finite")
    }

    /// All rows as a tensor.
    pub fn all_features<T: Scalar>(&self) -> Tensor<T> {
        self.gather(&(0..self.len()).collect::<Vec<_>>())
    }

    /// A new dataset made of the listed rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick = |labels: &Option<Vec<u16>>| {
            labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect::<Vec<_>>())
        };
        Self {
            feat_dim: self.feat_dim,
            features: indices.iter().flat_map(|&i| self.features(i).iter().copied()).collect(),
            task_labels: pick(&self.task_labels),
            nuisance_labels: pick(&self.nuisance_labels),
            num_classes: self.num_classes,
            num_nuisance: self.num_nuisance,
            latents: self.latents.as_ref().map(|l| Latents {
                per_sample: l.per_sample,
                values: indices
                    .iter()
                    .flat_map(|&i| l.values[i * l.per_sample..(i + 1) * l.per_sample].iter().copied())
                    .collect(),
            }),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let n = self.len();
        let mut out = Vec::with_capacity(HEADER_LEN + n * (self.feat_dim * 4 + 4));
        out.extend_from_slice(DATASET_MAGIC);
        put_u32(&mut out, to_u32(n, "sample count")?);
        put_u32(&mut out, to_u32(self.feat_dim, "feature width")?);
        out.push(u8::from(self.task_labels.is_some()));
        out.push(u8::from(self.nuisance_labels.is_some()));
        put_u16(&mut out, self.num_classes);
        put_u16(&mut out, self.num_nuisance);
        for i in 0..n {
            put_f32s(&mut out, self.features(i));
            if let Some(y) = &self.task_labels {
                put_u16(&mut out, y[i]);
            }
            if let Some(y) = &self.nuisance_labels {
                put_u16(&mut out, y[i]);
            }
        }
        if let Some(lat) = &self.latents {
            out.extend_from_slice(LATENT_MAGIC);
            put_u32(&mut out, to_u32(lat.per_sample, "latent width")?);
            put_f32s(&mut out, &lat.values);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let mut r = Reader::new(bytes);
        r.expect_tag(DATASET_MAGIC)?;
        let n = r.u32("sample count")? as usize;
        let feat_dim = r.u32("feature width")? as usize;
        let flag = |r: &mut Reader, what| -> Result<bool, FormatError> {
            match r.u8(what)? {
                0 => Ok(false),
                1 => Ok(true),
                v => Err(FormatError {
                    offset: r.offset() - 1,
                    reason: format!("{what} flag must be 0 or 1, got {v}"),
                }),
            }
        };
        let has_task = flag(&mut r, "task label")?;
        let has_nuis = flag(&mut r, "nuisance label")?;
        let num_classes = r.u16("class count")?;
        let num_nuisance = r.u16("nuisance class count")?;
        if feat_dim == 0 && n > 0 {
            return Err(r.error("zero feature width with non-empty body").into());
        }
        let row_bytes = feat_dim * 4 + 2 * usize::from(has_task) + 2 * usize::from(has_nuis);
        if n.checked_mul(row_bytes).is_none_or(|b| b > r.remaining()) {
            return Err(r
                .error(format!(
                    "truncated body: {n} samples of {row_bytes} bytes, {} bytes left",
                    r.remaining()
                ))
                .into());
        }

        let mut features = Vec::with_capacity(n * feat_dim);
        let mut task = has_task.then(|| Vec::with_capacity(n));
        let mut nuis = has_nuis.then(|| Vec::with_capacity(n));
        for _ in 0..n {
            features.extend(r.f32s(feat_dim, "features")?);
            for (labels, what, classes) in [
                (&mut task, "task label", num_classes),
                (&mut nuis, "nuisance label", num_nuisance),
            ] {
                if let Some(labels) = labels {
                    let at = r.offset();
                    let y = r.u16(what)?;
                    if y >= classes {
                        return Err(FormatError {
                            offset: at,
                            reason: format!("{what} {y} out of range for {classes} classes"),
                        }
                        .into());
                    }
                    labels.push(y);
                }
            }
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(FormatError {
                offset: HEADER_LEN + (pos / feat_dim) * row_bytes + (pos % feat_dim) * 4,
                reason: format!("non-finite feature value at index {pos}"),
            }
            .into());
        }
        let mut ds = Dataset::new(feat_dim, features, task, nuis, num_classes, num_nuisance)?;

        if r.remaining() > 0 {
            r.expect_tag(LATENT_MAGIC)?;
            let per_sample = r.u32("latent width")? as usize;
            let values = r.f32s(per_sample * n, "latent block")?;
            ds.latents = Some(Latents { per_sample, values });
            if r.remaining() > 0 {
                return Err(r.error("unexpected trailing bytes").into());
            }
        }
        Ok(ds)
    }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), CodecError> {
    let bytes = ds.to_bytes()?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DataError> {
    let bytes = fs::read(path).map_err(CodecError::from)?;
    Dataset::from_bytes(&bytes)
}

/// Target-task samples: every sample carries a task label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset(Dataset);

impl LabeledDataset {
    pub fn new(ds: Dataset) -> Result<Self, DataError> {
        if ds.task_labels.is_none() {
            return Err(DataError::MissingLabels("task"));
        }
        Ok(Self(ds))
    }

    pub fn inner(&self) -> &Dataset {
        &self.0
    }

    pub fn into_inner(self) -> Dataset {
        self.0
    }

    pub fn labels(&self) -> &[u16] {
        self.0.task_labels.as_deref().expect("checked at construction")
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels()[i] as usize
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    pub fn feat_dim(&self) -> usize {
        self.0.feat_dim
    }

    /// Deterministically carves off `ceil(fraction·len)` samples as a held-out set.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(seed, STREAM_HOLDOUT);
        // Fisher–Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let k = ((n as f64) * fraction).ceil() as usize;
        let (held, kept) = idx.split_at(k.min(n));
        let mut kept = kept.to_vec();
        let mut held = held.to_vec();
        kept.sort_unstable();
        held.sort_unstable();
        (
            LabeledDataset(self.0.subset(&kept)),
            LabeledDataset(self.0.subset(&held)),
        )
    }
}

/// Auxiliary samples labelled only with a task-irrelevant class.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceDataset {
    ds: Dataset,
    by_class: Vec<Vec<usize>>,
}

impl NuisanceDataset {
    /// Requires nuisance labels and at least one sample in every class.
    pub fn new(ds: Dataset) -> Result<Self, DataError> {
        let labels = ds
            .nuisance_labels
            .as_ref()
            .ok_or(DataError::MissingLabels("nuisance"))?;
        let mut by_class = vec![Vec::new(); ds.num_nuisance()];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y as usize].push(i);
        }
        if let Some(empty) = by_class.iter().position(Vec::is_empty) {
            return Err(DataError::EmptyClass(empty));
        }
        Ok(Self { ds, by_class })
    }

    pub fn inner(&self) -> &Dataset {
        &self.ds
    }

    pub fn labels(&self) -> &[u16] {
        self.ds.nuisance_labels.as_deref().expect("checked at construction")
    }

    pub fn len(&self) -> usize {
        self.ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.is_empty()
    }

    pub fn num_nuisance(&self) -> usize {
        self.ds.num_nuisance()
    }

    pub fn class_indices(&self, class: usize) -> &[usize] {
        &self.by_class[class]
    }

    /// Largest class, lowest index on ties.
    pub fn most_frequent_class(&self) -> usize {
        let mut best = 0;
        for (c, members) in self.by_class.iter().enumerate() {
            if members.len() > self.by_class[best].len() {
                best = c;
            }
        }
        best
    }
}

/// Rows drawn by a sampler, with their dataset indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub x: Tensor<T>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Batch A: `m` draws with replacement from the samples whose nuisance label is `class`.
pub fn sample_batch_a<T: Scalar>(
    src: &NuisanceDataset,
    class: usize,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Batch<T>, DataError> {
    let members = src.by_class.get(class).ok_or(DataError::EmptyClass(class))?;
    if members.is_empty() {
        return Err(DataError::EmptyClass(class));
    }
    let indices: Vec<usize> = (0..m).map(|_| members[rng.random_range(0..members.len())]).collect();
    Ok(Batch {
        x: src.ds.gather(&indices),
        labels: vec![class; m],
        indices,
    })
}

/// Batch B: `m` uniform draws with replacement from the whole source set.
pub fn sample_batch_b<T: Scalar>(src: &NuisanceDataset, m: usize, rng: &mut impl Rng) -> Result<Batch<T>, DataError> {
    let indices = uniform_indices(src.len(), m, rng)?;
    let labels = src.labels();
    Ok(Batch {
        x: src.ds.gather(&indices),
        labels: indices.iter().map(|&i| labels[i] as usize).collect(),
        indices,
    })
}

/// Batch C: `m` uniform draws with replacement from the target set.
pub fn sample_batch_c<T: Scalar>(tgt: &LabeledDataset, m: usize, rng: &mut impl Rng) -> Result<Batch<T>, DataError> {
    let indices = uniform_indices(tgt.len(), m, rng)?;
    let labels = tgt.labels();
    Ok(Batch {
        x: tgt.0.gather(&indices),
        labels: indices.iter().map(|&i| labels[i] as usize).collect(),
        indices,
    })
}

fn uniform_indices(n: usize, m: usize, rng: &mut impl Rng) -> Result<Vec<usize>, DataError> {
    if n == 0 {
        return Err(DataError::Empty);
    }
    Ok((0..m).map(|_| rng.random_range(0..n)).collect())
}

/// Generator knobs for the synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGenConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_source: usize,
    pub num_classes: usize,
    pub num_nuisance: usize,
    pub d_task: usize,
    pub d_nuis: usize,
    /// Norm of the task prototypes.
    pub proto_scale: f64,
    /// Norm of the nuisance prototypes.
    pub nuis_scale: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl Default for SyntheticGenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 2000,
            n_test: 10_000,
            n_source: 20_000,
            num_classes: 10,
            num_nuisance: 5,
            d_task: 32,
            d_nuis: 32,
            proto_scale: 5.0,
            nuis_scale: 8.0,
            sigma: 0.5,
            rho: 0.95,
        }
    }
}

impl SyntheticGenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Config(m));
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if self.d_task == 0 || self.d_nuis == 0 {
            return bad("d_task and d_nuis must be at least 1".into());
        }
        if self.num_classes == 0 || self.num_nuisance == 0 {
            return bad("class counts must be at least 1".into());
        }
        if self.num_classes > u16::MAX as usize || self.num_nuisance > u16::MAX as usize {
            return bad("class counts must fit in 16 bits".into());
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        for (name, s) in [("proto_scale", self.proto_scale), ("nuis_scale", self.nuis_scale)] {
            if s <= 0.0 || !s.is_finite() {
                return bad(format!("{name} must be positive, got {s}"));
            }
        }
        if self.n_source > 0 && self.n_source < self.num_nuisance {
            return bad("source set smaller than the number of nuisance classes".into());
        }
        Ok(())
    }

    pub fn feat_dim(&self) -> usize {
        self.d_task + self.d_nuis
    }

    /// The nuisance class the training split couples task class `y` to.
    pub fn bias_map(&self, y: usize) -> usize {
        y % self.num_nuisance
    }
}

/// Train (biased), test (unbiased) and source (nuisance-labelled) splits.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSplits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub source: NuisanceDataset,
}

const STREAM_TASK_PROTOTYPES: u64 = 1;
const STREAM_NUIS_PROTOTYPES: u64 = 2;
const STREAM_HOLDOUT: u64 = 3;
const SPLIT_TRAIN: u64 = 1;
const SPLIT_TEST: u64 = 2;
const SPLIT_SOURCE: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator stream of one sample: derived from `(seed, split, index)` so
/// samples are independent of generation order.
fn sample_rng(seed: u64, split: u64, index: usize) -> ChaCha8Rng {
    stream_rng(seed, (split << 48) | (index as u64 + (1 << 16)))
}

/// `count` unit vectors in `dim` dimensions with pairwise distance at least
/// `min_sep`, redrawn as a set until the separation holds.
pub fn separated_prototypes(
    count: usize,
    dim: usize,
    min_sep: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, DataError> {
    for _ in 0..PROTOTYPE_ATTEMPTS {
        let protos: Vec<Vec<f64>> = (0..count)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        let ok = (0..count).all(|i| {
            (i + 1..count).all(|j| {
                let d2: f64 = protos[i].iter().zip(&protos[j]).map(|(a, b)| (a - b).powi(2)).sum();
                d2.sqrt() >= min_sep
            })
        });
        if ok {
            return Ok(protos);
        }
    }
    Err(DataError::Separation {
        count,
        dim,
        min_sep,
        attempts: PROTOTYPE_ATTEMPTS,
    })
}

/// Builds the three splits. Deterministic in `cfg`.
pub fn generate_synthetic_biased(cfg: &SyntheticGenConfig) -> Result<SyntheticSplits, DataError> {
    cfg.validate()?;
    let task_protos = separated_prototypes(
        cfg.num_classes,
        cfg.d_task,
        MIN_PROTOTYPE_SEPARATION,
        &mut stream_rng(cfg.seed, STREAM_TASK_PROTOTYPES),
    )?;
    let nuis_protos = separated_prototypes(
        cfg.num_nuisance,
        cfg.d_nuis,
        MIN_PROTOTYPE_SEPARATION,
        &mut stream_rng(cfg.seed, STREAM_NUIS_PROTOTYPES),
    )?;

    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Train,
        Test,
        Source,
    }

    let build = |kind: Kind, n: usize| -> Result<Dataset, DataError> {
        let split = match kind {
            Kind::Train => SPLIT_TRAIN,
            Kind::Test => SPLIT_TEST,
            Kind::Source => SPLIT_SOURCE,
        };
        let dim = cfg.feat_dim();
        let mut features = Vec::with_capacity(n * dim);
        let mut task = Vec::with_capacity(n);
        let mut nuis = Vec::with_capacity(n);
        let mut latents = Vec::with_capacity(n * 2);
        for i in 0..n {
            let mut rng = sample_rng(cfg.seed, split, i);
            let y = rng.random_range(0..cfg.num_classes);
            let y_tir = if kind == Kind::Train && rng.random_bool(cfg.rho) {
                cfg.bias_map(y)
            } else {
                rng.random_range(0..cfg.num_nuisance)
            };
            for &p in &task_protos[y] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push((cfg.proto_scale * p + cfg.sigma * noise) as f32);
            }
            for &p in &nuis_protos[y_tir] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push((cfg.nuis_scale * p + cfg.sigma * noise) as f32);
            }
            task.push(y as u16);
            nuis.push(y_tir as u16);
            latents.extend([y as f32, y_tir as f32]);
        }
        let task = (kind != Kind::Source).then_some(task);
        Dataset::new(
            dim,
            features,
            task,
            Some(nuis),
            cfg.num_classes as u16,
            cfg.num_nuisance as u16,
        )?
        .with_latents(Latents {
            per_sample: 2,
            values: latents,
        })
    };

    Ok(SyntheticSplits {
        train: LabeledDataset::new(build(Kind::Train, cfg.n_train)?)?,
        test: LabeledDataset::new(build(Kind::Test, cfg.n_test)?)?,
        source: NuisanceDataset::new(build(Kind::Source, cfg.n_source)?)?,
    })
}
