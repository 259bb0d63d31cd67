//! Finite-difference sweeps over every differentiable piece of the model.

use purified::autodiff::{finite_diff_check, AutodiffError, FdReport, Tape, Tensor, Var};
use purified::nn::{BoundMlp, Mlp, MlpSpec};
use purified::objectives::{combined_loss, critic_objective, cross_entropy_loss, wasserstein_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::random_tensor;

pub const STEP: f64 = 1e-3;

type Case = fn(&mut ChaCha8Rng) -> FdReport<f64>;

fn weighted_sum(tape: &mut Tape<f64>, v: Var, w: Tensor<f64>) -> Result<Var, AutodiffError> {
    let wv = tape.constant(w);
    let p = tape.mul(v, wv)?;
    tape.sum(p)
}

fn objective_err(e: purified::objectives::ObjectiveError) -> AutodiffError {
    match e {
        purified::objectives::ObjectiveError::Autodiff(a) => a,
        other => panic!("objective failed: {other}"),
    }
}

fn linear(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let (m, d, o) = (4, 5, 3);
    let r = random_tensor(rng, &[m, o], 1.0);
    let params = [
        random_tensor(rng, &[m, d], 1.0),
        random_tensor(rng, &[o, d], 1.0),
        random_tensor(rng, &[o], 1.0),
    ];
    finite_diff_check(
        |tape, v| {
            let out = BoundMlp::from_vars(&v[1..]).forward(tape, v[0])?;
            weighted_sum(tape, out, r.clone())
        },
        &params,
        STEP,
    )
    .unwrap()
}

fn matmul(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let r = random_tensor(rng, &[3, 2], 1.0);
    let params = [random_tensor(rng, &[3, 4], 1.0), random_tensor(rng, &[4, 2], 1.0)];
    finite_diff_check(
        |tape, v| {
            let p = tape.matmul(v[0], v[1])?;
            weighted_sum(tape, p, r.clone())
        },
        &params,
        STEP,
    )
    .unwrap()
}

fn relu(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let r = random_tensor(rng, &[6, 3], 1.0);
    finite_diff_check(
        |tape, v| {
            let h = tape.relu(v[0])?;
            weighted_sum(tape, h, r.clone())
        },
        &[random_tensor(rng, &[6, 3], 1.0)],
        STEP,
    )
    .unwrap()
}

fn cross_entropy(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
    finite_diff_check(
        |tape, v| Ok(cross_entropy_loss(tape, v[0], &labels).map_err(objective_err)?.var),
        &[random_tensor(rng, &[5, 4], 3.0)],
        STEP,
    )
    .unwrap()
}

fn critic_dual(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    finite_diff_check(
        |tape, v| Ok(critic_objective(tape, v[0], v[1]).map_err(objective_err)?.var),
        &[random_tensor(rng, &[6, 1], 2.0), random_tensor(rng, &[6, 1], 2.0)],
        STEP,
    )
    .unwrap()
}

fn wasserstein(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    finite_diff_check(
        |tape, v| Ok(wasserstein_loss(tape, v[0]).map_err(objective_err)?.var),
        &[random_tensor(rng, &[7, 1], 2.0)],
        STEP,
    )
    .unwrap()
}

fn combined(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
    let (l1, l2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
    finite_diff_check(
        |tape, v| {
            let ce = cross_entropy_loss(tape, v[0], &labels).map_err(objective_err)?;
            let w = wasserstein_loss(tape, v[1]).map_err(objective_err)?;
            Ok(combined_loss(tape, ce, w, l1, l2).map_err(objective_err)?.var)
        },
        &[random_tensor(rng, &[4, 3], 2.0), random_tensor(rng, &[4, 1], 2.0)],
        STEP,
    )
    .unwrap()
}

fn net(rng: &mut ChaCha8Rng, widths: &[usize]) -> Vec<Tensor<f64>> {
    let mlp = Mlp::<f64>::init(&MlpSpec::new(widths.to_vec()), rng).unwrap();
    mlp.params().into_iter().cloned().collect()
}

const EXT: [usize; 4] = [5, 6, 6, 4];
const CLS: [usize; 2] = [4, 3];
const CRITIC: [usize; 4] = [4, 6, 3, 1];

/// Cross-entropy through extractor and classifier, w.r.t. both networks and the input.
fn classification_model(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
    let mut params = vec![random_tensor(rng, &[4, 5], 1.5)];
    params.extend(net(rng, &EXT));
    let split = params.len();
    params.extend(net(rng, &CLS));
    finite_diff_check(
        |tape, v| {
            let r = BoundMlp::from_vars(&v[1..split]).forward(tape, v[0])?;
            let logits = BoundMlp::from_vars(&v[split..]).forward(tape, r)?;
            Ok(cross_entropy_loss(tape, logits, &labels).map_err(objective_err)?.var)
        },
        &params,
        STEP,
    )
    .unwrap()
}

/// Wasserstein loss through extractor and critic.
fn wasserstein_model(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let mut params = vec![random_tensor(rng, &[4, 5], 1.5)];
    params.extend(net(rng, &EXT));
    let split = params.len();
    params.extend(net(rng, &CRITIC));
    finite_diff_check(
        |tape, v| {
            let r = BoundMlp::from_vars(&v[1..split]).forward(tape, v[0])?;
            let s = BoundMlp::from_vars(&v[split..]).forward(tape, r)?;
            Ok(wasserstein_loss(tape, s).map_err(objective_err)?.var)
        },
        &params,
        STEP,
    )
    .unwrap()
}

/// Critic dual objective on two representation batches.
fn critic_model(rng: &mut ChaCha8Rng) -> FdReport<f64> {
    let mut params = vec![random_tensor(rng, &[5, 4], 1.5), random_tensor(rng, &[5, 4], 1.5)];
    params.extend(net(rng, &CRITIC));
    finite_diff_check(
        |tape, v| {
            let critic = BoundMlp::from_vars(&v[2..]);
            let sa = critic.forward(tape, v[0])?;
            let sb = critic.forward(tape, v[1])?;
            Ok(critic_objective(tape, sa, sb).map_err(objective_err)?.var)
        },
        &params,
        STEP,
    )
    .unwrap()
}

pub const CASES: [(&str, Case); 10] = [
    ("linear layer", linear),
    ("matmul", matmul),
    ("relu", relu),
    ("cross-entropy", cross_entropy),
    ("critic objective", critic_dual),
    ("wasserstein loss", wasserstein),
    ("combined loss", combined),
    ("extractor + classifier", classification_model),
    ("extractor + critic", wasserstein_model),
    ("critic on two batches", critic_model),
];

/// Worst relative error of one case over `trials` random points, and the
/// number of coordinates actually compared.
pub fn sweep(case: Case, trials: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..trials {
        let r = case(&mut rng);
        worst = worst.max(r.max_rel_err);
        checked += r.checked;
    }
    (worst, checked)
}
