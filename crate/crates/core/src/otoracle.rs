//! Exact Wasserstein-1 distances between equal-size empirical samples, a
//! critic-based dual estimate, and numerical checks of the cross-distribution
//! disagreement bound `ε₁(h₁,h₂) ≤ ε₂(h₁,h₂) + 2K·W₁`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tensor};
use crate::data::Dataset;
use crate::nn::{Mlp, MlpSpec, NnError, CRITIC_HIDDEN};
use crate::objectives::epsilon_discrepancy;
use crate::optimizers::{AdamState, Direction, OptimError};
use crate::scalar::Scalar;

/// Largest sample size the cubic assignment solver accepts.
pub const MAX_ASSIGNMENT_SIZE: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("empty sample")]
    Empty,
    #[error("sample sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("point dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("assignment size {0} exceeds the limit of {MAX_ASSIGNMENT_SIZE}")]
    TooLarge(usize),
    #[error("invalid piecewise-linear function: {0}")]
    Knots(String),
    #[error("function expects {expected}-dimensional input, got {got}")]
    FnDim { expected: usize, got: usize },
    #[error("critic training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },
    #[error(transparent)]
    Model(#[from] NnError),
}

impl From<AutodiffError> for OtError {
    fn from(e: AutodiffError) -> Self {
        OtError::Model(NnError::from(e))
    }
}

/// Uniformly weighted point cloud, `k×d`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    points: Tensor<f64>,
}

impl EmpiricalDistribution {
    pub fn new(points: Tensor<f64>) -> Result<Self, OtError> {
        let (k, _) = points.dims2()?;
        if k == 0 {
            return Err(OtError::Empty);
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OtError> {
        if rows.is_empty() {
            return Err(OtError::Empty);
        }
        Self::new(Tensor::from_rows(rows)?)
    }

    /// One-dimensional cloud.
    pub fn from_values(values: &[f64]) -> Result<Self, OtError> {
        Self::new(Tensor::new(vec![values.len(), 1], values.to_vec())?)
    }

    /// Features of every sample in a dataset.
    pub fn from_dataset(ds: &Dataset) -> Result<Self, OtError> {
        Self::new(ds.all_features())
    }

    pub fn len(&self) -> usize {
        self.points.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.shape()[1]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn points(&self) -> &Tensor<f64> {
        &self.points
    }

    /// Root-mean-square distance of the points from their mean.
    pub fn spread(&self) -> f64 {
        let (k, d) = (self.len(), self.dim());
        let mut mean = vec![0.0; d];
        for i in 0..k {
            for (m, v) in mean.iter_mut().zip(self.point(i)) {
                *m += v / k as f64;
            }
        }
        let ss: f64 = (0..k)
            .map(|i| {
                self.point(i)
                    .iter()
                    .zip(&mean)
                    .map(|(v, m)| (v - m) * (v - m))
                    .sum::<f64>()
            })
            .sum();
        (ss / k as f64).sqrt()
    }

    /// Pads to `k` points by appending draws with replacement.
    pub fn resample_to(&self, k: usize, rng: &mut impl Rng) -> Self {
        let n = self.len();
        let mut data = self.points.data()[..n.min(k) * self.dim()].to_vec();
        for _ in n..k {
            data.extend_from_slice(self.point(rng.random_range(0..n)));
        }
        Self {
            points: Tensor::new(vec![k, self.dim()], data).expect("finite points"),
        }
    }
}

/// Brings two clouds to a common size by padding the smaller one.
pub fn equalize(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    seed: u64,
) -> (EmpiricalDistribution, EmpiricalDistribution) {
    let k = a.len().max(b.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (a.resample_to(k, &mut rng), b.resample_to(k, &mut rng))
}

/// Exact empirical W₁ on the line: mean gap between sorted samples.
pub fn w1_exact_1d(a: &[f64], b: &[f64]) -> Result<f64, OtError> {
    if a.is_empty() || b.is_empty() {
        return Err(OtError::Empty);
    }
    if a.len() != b.len() {
        return Err(OtError::SizeMismatch(a.len(), b.len()));
    }
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

fn check_pair(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<(), OtError> {
    if a.len() != b.len() {
        return Err(OtError::SizeMismatch(a.len(), b.len()));
    }
    if a.dim() != b.dim() {
        return Err(OtError::DimMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Minimum-cost perfect matching of a square cost matrix by shortest
/// augmenting paths with dual potentials. Returns `assignment[row] = col`.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix is not n×n");
    // 1-based with a virtual column 0, after the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Exact empirical W₁ under the Euclidean ground metric via optimal assignment.
pub fn w1_exact_assignment(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64, OtError> {
    check_pair(a, b)?;
    let k = a.len();
    if k > MAX_ASSIGNMENT_SIZE {
        return Err(OtError::TooLarge(k));
    }
    let cost: Vec<f64> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| euclid(a.point(i), b.point(j)))
        .collect();
    let assignment = solve_assignment(&cost, k);
    Ok(assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * k + j])
        .sum::<f64>()
        / k as f64)
}

/// Exact W₁, using the sorting formula when the points are scalars.
pub fn w1_exact(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64, OtError> {
    check_pair(a, b)?;
    if a.dim() == 1 {
        w1_exact_1d(a.points.data(), b.points.data())
    } else {
        w1_exact_assignment(a, b)
    }
}

/// Continuous piecewise-linear function on the line, constant outside its knots.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, OtError> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(OtError::Knots(format!(
                "{} knots and {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(OtError::Knots("non-finite knot or value".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OtError::Knots("knots must be strictly increasing".into()));
        }
        Ok(Self { knots, values })
    }

    /// Random function with `pieces` segments and slopes in `[−max_slope, max_slope]`.
    pub fn random(rng: &mut impl Rng, pieces: usize, lo: f64, hi: f64, max_slope: f64) -> Self {
        let mut knots: Vec<f64> = (0..=pieces).map(|_| rng.random_range(lo..hi)).collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut values = vec![rng.random_range(-1.0..1.0)];
        for w in knots.windows(2) {
            let slope = rng.random_range(-max_slope..=max_slope);
            values.push(values[values.len() - 1] + slope * (w[1] - w[0]));
        }
        Self::new(knots, values).expect("sorted distinct knots")
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] {
            return self.values[0];
        }
        if x >= k[k.len() - 1] {
            return self.values[k.len() - 1];
        }
        let i = k.partition_point(|&t| t <= x);
        let (x0, x1) = (k[i - 1], k[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Exact Lipschitz constant: the steepest segment.
    pub fn lipschitz(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// A function with a known Lipschitz bound.
#[derive(Clone, Debug, PartialEq)]
pub enum LipschitzFn {
    PiecewiseLinear(PiecewiseLinear),
    /// Scalar-output network; its bound is the product of layer spectral norms.
    Network(Mlp<f64>),
}

impl LipschitzFn {
    pub fn lipschitz(&self) -> f64 {
        match self {
            LipschitzFn::PiecewiseLinear(p) => p.lipschitz(),
            LipschitzFn::Network(net) => net.lipschitz_bound(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            LipschitzFn::PiecewiseLinear(_) => 1,
            LipschitzFn::Network(net) => net.in_dim(),
        }
    }

    /// Values at every point of `dist`.
    pub fn eval_all(&self, dist: &EmpiricalDistribution) -> Result<Vec<f64>, OtError> {
        if dist.dim() != self.input_dim() {
            return Err(OtError::FnDim {
                expected: self.input_dim(),
                got: dist.dim(),
            });
        }
        match self {
            LipschitzFn::PiecewiseLinear(p) => Ok(dist.points.data().iter().map(|&x| p.eval(x)).collect()),
            LipschitzFn::Network(net) => Ok(net.forward(&dist.points)?.into_data()),
        }
    }
}

fn discrepancy(h1: &LipschitzFn, h2: &LipschitzFn, dist: &EmpiricalDistribution) -> Result<f64, OtError> {
    let (v1, v2) = (h1.eval_all(dist)?, h2.eval_all(dist)?);
    let idx: Vec<usize> = (0..dist.len()).collect();
    epsilon_discrepancy(|&i: &usize| v1[i], |&i: &usize| v2[i], &idx).map_err(|_| OtError::Empty)
}

/// Both sides of the disagreement bound for one pair of hypotheses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    /// `ε_{R₁}(h₁, h₂)`
    pub lhs: f64,
    /// `ε_{R₂}(h₁, h₂) + 2K·W₁(R₁, R₂)`
    pub rhs: f64,
    pub wd: f64,
    pub k: f64,
    pub holds: bool,
}

/// Slack allowed for rounding when comparing the two sides.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// `ε_{R₁}(h₁,h₂) ≤ ε_{R₂}(h₁,h₂) + 2K·W₁(R₁,R₂)` with `K` the larger of
/// the two functions' bounds and `W₁` from the exact oracle.
pub fn theorem1_check(
    h1: &LipschitzFn,
    h2: &LipschitzFn,
    r1: &EmpiricalDistribution,
    r2: &EmpiricalDistribution,
) -> Result<BoundReport, OtError> {
    let lhs = discrepancy(h1, h2, r1)?;
    let eps2 = discrepancy(h1, h2, r2)?;
    let wd = w1_exact(r1, r2)?;
    let k = h1.lipschitz().max(h2.lipschitz());
    let rhs = eps2 + 2.0 * k * wd;
    Ok(BoundReport {
        lhs,
        rhs,
        wd,
        k,
        holds: lhs <= rhs + BOUND_TOLERANCE,
    })
}

/// Error of `f_c` against the labelling function `f_star` on `R₁`, bounded by
/// its error on `R₂` plus the transport term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBoundReport {
    pub gamma1: f64,
    pub gamma2: f64,
    /// `γ₂ + 2K·W₁`
    pub bound: f64,
    pub holds: bool,
}

pub fn error_bound_check(
    f_c: &LipschitzFn,
    f_star: &LipschitzFn,
    r1: &EmpiricalDistribution,
    r2: &EmpiricalDistribution,
) -> Result<ErrorBoundReport, OtError> {
    let b = theorem1_check(f_c, f_star, r1, r2)?;
    Ok(ErrorBoundReport {
        gamma1: b.lhs,
        gamma2: b.rhs - 2.0 * b.k * b.wd,
        bound: b.rhs,
        holds: b.holds,
    })
}

/// Tally of randomized bound checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub violations: usize,
    /// Smallest `rhs − lhs` seen.
    pub min_slack: f64,
}

fn random_cloud_1d(rng: &mut impl Rng, k: usize) -> EmpiricalDistribution {
    let centre = rng.random_range(-2.0..2.0);
    let spread = rng.random_range(0.1..2.0);
    let values: Vec<f64> = (0..k).map(|_| centre + spread * rng.random_range(-1.0..1.0)).collect();
    EmpiricalDistribution::from_values(&values).expect("non-empty cloud")
}

fn random_pl(rng: &mut impl Rng) -> LipschitzFn {
    let pieces = rng.random_range(1..=8);
    let max_slope = rng.random_range(0.05..3.0);
    LipschitzFn::PiecewiseLinear(PiecewiseLinear::random(rng, pieces, -4.0, 4.0, max_slope))
}

fn run_trials(
    trials: usize,
    seed: u64,
    check: impl Fn(&LipschitzFn, &LipschitzFn, &EmpiricalDistribution, &EmpiricalDistribution) -> (f64, f64, bool),
) -> TrialSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = TrialSummary {
        trials,
        violations: 0,
        min_slack: f64::INFINITY,
    };
    for _ in 0..trials {
        let k = rng.random_range(1..=40);
        let (h1, h2) = (random_pl(&mut rng), random_pl(&mut rng));
        let (r1, r2) = (random_cloud_1d(&mut rng, k), random_cloud_1d(&mut rng, k));
        let (lhs, rhs, holds) = check(&h1, &h2, &r1, &r2);
        summary.min_slack = summary.min_slack.min(rhs - lhs);
        if !holds {
            summary.violations += 1;
        }
    }
    summary
}

/// Random piecewise-linear pairs on random equal-size 1-D clouds.
pub fn theorem1_trials(trials: usize, seed: u64) -> TrialSummary {
    run_trials(trials, seed, |h1, h2, r1, r2| {
        let b = theorem1_check(h1, h2, r1, r2).expect("well-formed trial");
        (b.lhs, b.rhs, b.holds)
    })
}

/// As [`theorem1_trials`], with the second function in the labelling role.
pub fn error_bound_trials(trials: usize, seed: u64) -> TrialSummary {
    run_trials(trials, seed, |f_c, f_star, r1, r2| {
        let e = error_bound_check(f_c, f_star, r1, r2).expect("well-formed trial");
        (e.gamma1, e.bound, e.holds)
    })
}

/// Training budget and shape of the critic used by [`critic_w1_estimate`].
#[derive(Clone, Debug, PartialEq)]
pub struct CriticBudget {
    pub steps: usize,
    pub lr: f64,
    pub clip: f64,
    pub clip_biases: bool,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for CriticBudget {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 0.01,
            clip: 0.1,
            clip_biases: false,
            hidden: CRITIC_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticEstimate {
    /// `mean f(A) − mean f(B)` after training.
    pub objective: f64,
    /// Product of the trained critic's layer spectral norms.
    pub k_upper: f64,
    /// `objective / k_upper`
    pub estimate: f64,
}

/// Dual estimate of `W₁(a, b)`: full-batch Adam ascent of `mean f(a) − mean f(b)`
/// over a weight-clipped relu critic, normalised by its Lipschitz bound.
pub fn critic_w1_estimate(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    budget: &CriticBudget,
) -> Result<CriticEstimate, OtError> {
    if a.dim() != b.dim() {
        return Err(OtError::DimMismatch(a.dim(), b.dim()));
    }
    let mut widths = vec![a.dim()];
    widths.extend(&budget.hidden);
    widths.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut critic = Mlp::<f64>::init(&MlpSpec::new(widths), &mut rng)?;
    critic.clip_weights(budget.clip, budget.clip_biases)?;
    let mut adam = AdamState::new(&critic.params(), budget.lr);

    let objective_of = |critic: &Mlp<f64>| -> Result<f64, OtError> {
        let mean = |t: Tensor<f64>| t.data().iter().sum::<f64>() / t.len() as f64;
        Ok(mean(critic.forward(&a.points)?) - mean(critic.forward(&b.points)?))
    };

    for step in 0..budget.steps {
        let mut tape = crate::autodiff::Tape::new();
        let bound = critic.bind(&mut tape, true);
        let (va, vb) = (tape.constant(a.points.clone()), tape.constant(b.points.clone()));
        let sa = bound.forward(&mut tape, va)?;
        let sb = bound.forward(&mut tape, vb)?;
        let ma = tape.mean(sa)?;
        let mb = tape.mean(sb)?;
        let obj = tape.sub(ma, mb)?;
        let diverged = |reason: String| OtError::Diverged { step, reason };
        let g = tape.backward(obj).map_err(|e| diverged(e.to_string()))?;
        let grads = bound.grads(&g);
        adam.step(&mut critic.params_mut(), &grads, Direction::Ascent)
            .map_err(|e: OptimError| diverged(e.to_string()))?;
        critic.clip_weights(budget.clip, budget.clip_biases)?;
    }

    let objective = objective_of(&critic)?;
    let k_upper = critic.lipschitz_bound();
    let estimate = if k_upper > 0.0 { objective / k_upper } else { 0.0 };
    if !estimate.is_finite() {
        return Err(OtError::Diverged {
            step: budget.steps,
            reason: "non-finite estimate".into(),
        });
    }
    Ok(CriticEstimate {
        objective,
        k_upper,
        estimate,
    })
}

/// Lets callers on other scalar types feed representations in.
pub fn distribution_from<T: Scalar>(points: &Tensor<T>) -> Result<EmpiricalDistribution, OtError> {
    EmpiricalDistribution::new(points.convert())
}
