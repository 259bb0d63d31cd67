//! Fully connected networks: the feature extractor, the linear classifier
//! and the critic, plus initialization and weight clipping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Gradients, Tape, Tensor, Var};
use crate::linalg::spectral_norm;
use crate::scalar::Scalar;

/// Width of the representation produced by the extractor.
pub const REP_DIM: usize = 128;
/// Hidden widths of the critic; its output layer has a single unit.
pub const CRITIC_HIDDEN: [usize; 3] = [512, 256, 10];
pub const DEFAULT_EXTRACTOR_HIDDEN: [usize; 2] = [256, 256];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("layer {layer} has zero fan-in")]
    ZeroFanIn { layer: usize },
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Affine map `x ↦ x·Wᵀ + b` with `W` stored `out×in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LinearLayer<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        let (out, _) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(NnError::Config(format!(
                "bias shape {:?} does not match {} outputs",
                bias.shape(),
                out
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Stack of linear layers with relu between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<LinearLayer<T>>,
}

/// Layer widths from input to output, e.g. `[64, 256, 256, 128]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        Self { widths }
    }

    pub fn extractor(d_in: usize, hidden: &[usize], rep_dim: usize) -> Self {
        let mut widths = vec![d_in];
        widths.extend_from_slice(hidden);
        widths.push(rep_dim);
        Self { widths }
    }

    pub fn classifier(rep_dim: usize, n_classes: usize) -> Self {
        Self {
            widths: vec![rep_dim, n_classes],
        }
    }

    pub fn critic(rep_dim: usize, hidden: &[usize]) -> Self {
        let mut widths = vec![rep_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self { widths }
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn from_layers(layers: Vec<LinearLayer<T>>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Config("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::Config(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Weights ~ U(−1/√fan_in, 1/√fan_in), biases zero.
    pub fn init(spec: &MlpSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        if spec.widths.len() < 2 {
            return Err(NnError::Config(format!(
                "need input and output widths, got {:?}",
                spec.widths
            )));
        }
        let mut layers = Vec::with_capacity(spec.widths.len() - 1);
        for (i, w) in spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            if fan_in == 0 {
                return Err(NnError::ZeroFanIn { layer: i });
            }
            if fan_out == 0 {
                return Err(NnError::Config(format!("layer {i} has zero outputs")));
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| T::lit(rng.random_range(-bound..bound)))
                .collect();
            layers.push(LinearLayer {
                weight: Tensor::new(vec![fan_out, fan_in], data)?,
                bias: Tensor::zeros(&[fan_out]),
            });
        }
        Ok(Self { layers })
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            layers: spec.widths.windows(2).map(|w| LinearLayer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn layers(&self) -> &[LinearLayer<T>] {
        &self.layers
    }

    pub fn spec(&self) -> MlpSpec {
        let mut widths = vec![self.in_dim()];
        widths.extend(self.layers.iter().map(LinearLayer::out_dim));
        MlpSpec { widths }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Parameters in `[W₀, b₀, W₁, b₁, …]` order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Records the parameters on `tape`, as gradient leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundMlp {
        let mut leaf = |t: &Tensor<T>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        BoundMlp {
            layers: self.layers.iter().map(|l| (leaf(&l.weight), leaf(&l.bias))).collect(),
        }
    }

    /// Forward pass without gradient tracking.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = bound.forward(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }

    /// Clamps every weight (and bias, when `clip_biases`) into `[−c, c]`.
    pub fn clip_weights(&mut self, c: T, clip_biases: bool) -> Result<(), NnError> {
        if c.is_nan() || c <= T::zero() {
            return Err(NnError::Config(format!("clip bound must be positive, got {c}")));
        }
        for layer in &mut self.layers {
            for w in layer.weight.data_mut() {
                *w = w.max(-c).min(c);
            }
            if clip_biases {
                for b in layer.bias.data_mut() {
                    *b = b.max(-c).min(c);
                }
            }
        }
        Ok(())
    }

    pub fn max_abs_weight(&self, include_biases: bool) -> T {
        self.layers.iter().fold(T::zero(), |m, l| {
            let m = m.max(l.weight.max_abs());
            if include_biases {
                m.max(l.bias.max_abs())
            } else {
                m
            }
        })
    }

    /// Upper bound on the Lipschitz constant (Euclidean norms): the product
    /// of the layers' spectral norms. Relu is 1-Lipschitz and biases do not
    /// contribute.
    pub fn lipschitz_bound(&self) -> T {
        self.layers
            .iter()
            .map(|l| spectral_norm(&l.weight))
            .fold(T::one(), |acc, s| acc * s)
    }
}

/// Tape handles of an [`Mlp`]'s parameters for one forward pass.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    /// Rebuilds handles from `(weight, bias)` vars in [`Mlp::params`] order.
    pub fn from_vars(vars: &[Var]) -> Self {
        assert!(
            !vars.is_empty() && vars.len().is_multiple_of(2),
            "expected weight/bias pairs"
        );
        Self {
            layers: vars.chunks_exact(2).map(|p| (p[0], p[1])).collect(),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var, AutodiffError> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul_t(h, w)?;
            h = tape.add(z, b)?;
            if i < last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Gradients in the same order as [`Mlp::params`].
    pub fn grads<T: Scalar>(&self, g: &Gradients<T>) -> Vec<Tensor<T>> {
        self.vars().into_iter().map(|v| g.wrt(v)).collect()
    }
}

/// Architecture of the three networks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub d_in: usize,
    pub n_classes: usize,
    pub extractor_hidden: Vec<usize>,
    pub rep_dim: usize,
    pub critic_hidden: Vec<usize>,
}

impl ModelSpec {
    pub fn new(d_in: usize, n_classes: usize) -> Self {
        Self {
            d_in,
            n_classes,
            extractor_hidden: DEFAULT_EXTRACTOR_HIDDEN.to_vec(),
            rep_dim: REP_DIM,
            critic_hidden: CRITIC_HIDDEN.to_vec(),
        }
    }

    pub fn extractor(&self) -> MlpSpec {
        MlpSpec::extractor(self.d_in, &self.extractor_hidden, self.rep_dim)
    }

    pub fn classifier(&self) -> MlpSpec {
        MlpSpec::classifier(self.rep_dim, self.n_classes)
    }

    pub fn critic(&self) -> MlpSpec {
        MlpSpec::critic(self.rep_dim, &self.critic_hidden)
    }
}

/// Extractor, classifier and critic parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub extractor: Mlp<T>,
    pub classifier: Mlp<T>,
    pub critic: Mlp<T>,
}

// Independent ChaCha streams so changing one network's shape never shifts
// another network's initial weights.
const EXTRACTOR_STREAM: u64 = 1;
const CLASSIFIER_STREAM: u64 = 2;
const CRITIC_STREAM: u64 = 3;

impl<T: Scalar> ModelParams<T> {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        let net = |s: &MlpSpec, stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            Mlp::init(s, &mut rng)
        };
        let model = Self {
            extractor: net(&spec.extractor(), EXTRACTOR_STREAM)?,
            classifier: net(&spec.classifier(), CLASSIFIER_STREAM)?,
            critic: net(&spec.critic(), CRITIC_STREAM)?,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.classifier.layers().len() != 1 {
            return Err(NnError::Config("classifier must be a single linear layer".into()));
        }
        if self.extractor.out_dim() != self.classifier.in_dim() || self.extractor.out_dim() != self.critic.in_dim() {
            return Err(NnError::Config(format!(
                "representation width mismatch: extractor {}, classifier {}, critic {}",
                self.extractor.out_dim(),
                self.classifier.in_dim(),
                self.critic.in_dim()
            )));
        }
        if self.critic.out_dim() != 1 {
            return Err(NnError::Config("critic must produce one score".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> ModelSpec {
        let e = self.extractor.spec().widths;
        let c = self.critic.spec().widths;
        ModelSpec {
            d_in: e[0],
            n_classes: self.classifier.out_dim(),
            extractor_hidden: e[1..e.len() - 1].to_vec(),
            rep_dim: *e.last().expect("extractor widths"),
            critic_hidden: c[1..c.len() - 1].to_vec(),
        }
    }

    /// Representations `f_e(x)` for an `m×d_in` batch.
    pub fn represent(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        self.extractor.forward(x)
    }

    /// Classifier logits `f_c(r)`.
    pub fn logits(&self, reps: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.classifier.forward(reps)
    }

    /// Critic scores `f_d(r)`, one per row.
    pub fn scores(&self, reps: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.critic.forward(reps)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        let (_, cols) = x.dims2()?;
        if cols != self.extractor.in_dim() {
            return Err(NnError::Autodiff(AutodiffError::Shape(format!(
                "extractor expects {} input columns, got {}",
                self.extractor.in_dim(),
                cols
            ))));
        }
        Ok(())
    }
}
