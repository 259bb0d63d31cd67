//! Training objectives: classification cross-entropy, the critic's dual
//! objective, the extractor's Wasserstein loss, and their weighted sum.

use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("label {label} out of range for {classes} classes (row {row})")]
    Label { row: usize, label: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch sizes differ: {0} vs {1}")]
    BatchMismatch(usize, usize),
    #[error("invalid loss weight: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// A scalar loss node plus a plain copy of its value for logging.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue<T> {
    pub var: Var,
    pub value: T,
}

impl<T: Scalar> LossValue<T> {
    fn read(tape: &Tape<T>, var: Var) -> Self {
        let value = tape.value(var).item().expect("loss nodes are scalars");
        Self { var, value }
    }
}

fn batch_len<T: Scalar>(tape: &Tape<T>, v: Var) -> Result<usize, ObjectiveError> {
    let n = tape.value(v).shape().first().copied().unwrap_or(1);
    if n == 0 {
        Err(ObjectiveError::EmptyBatch)
    } else {
        Ok(n)
    }
}

/// Mean negative log-likelihood of `labels` under row-wise softmax of `logits`.
pub fn cross_entropy_loss<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    labels: &[usize],
) -> Result<LossValue<T>, ObjectiveError> {
    let (rows, classes) = tape.value(logits).dims2()?;
    if rows == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(ObjectiveError::Label { row, label, classes });
    }
    let logp = tape.log_softmax(logits)?;
    let picked = tape.pick(logp, labels)?;
    let mean = tape.mean(picked)?;
    let loss = tape.neg(mean)?;
    Ok(LossValue::read(tape, loss))
}

/// `mean(scores_a) − mean(scores_b)`: the dual objective the critic ascends.
pub fn critic_objective<T: Scalar>(
    tape: &mut Tape<T>,
    scores_a: Var,
    scores_b: Var,
) -> Result<LossValue<T>, ObjectiveError> {
    let (na, nb) = (batch_len(tape, scores_a)?, batch_len(tape, scores_b)?);
    if na != nb {
        return Err(ObjectiveError::BatchMismatch(na, nb));
    }
    let ma = tape.mean(scores_a)?;
    let mb = tape.mean(scores_b)?;
    let diff = tape.sub(ma, mb)?;
    Ok(LossValue::read(tape, diff))
}

/// Negative mean critic score over the target batch.
pub fn wasserstein_loss<T: Scalar>(tape: &mut Tape<T>, scores_c: Var) -> Result<LossValue<T>, ObjectiveError> {
    batch_len(tape, scores_c)?;
    let mean = tape.mean(scores_c)?;
    let loss = tape.neg(mean)?;
    Ok(LossValue::read(tape, loss))
}

/// `λ₁·classification + λ₂·wasserstein`.
pub fn combined_loss<T: Scalar>(
    tape: &mut Tape<T>,
    classification: LossValue<T>,
    wasserstein: LossValue<T>,
    lambda1: T,
    lambda2: T,
) -> Result<LossValue<T>, ObjectiveError> {
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if l < T::zero() || !l.is_finite() {
            return Err(ObjectiveError::Config(format!("{name} = {l}")));
        }
    }
    let a = tape.scale(classification.var, lambda1)?;
    let b = tape.scale(wasserstein.var, lambda2)?;
    let sum = tape.add(a, b)?;
    Ok(LossValue::read(tape, sum))
}

/// Mean absolute disagreement `E_r |h₁(r) − h₂(r)|` over an empirical sample.
pub fn epsilon_discrepancy<T, S, H1, H2>(h1: H1, h2: H2, samples: &[S]) -> Result<T, ObjectiveError>
where
    T: Scalar,
    H1: Fn(&S) -> T,
    H2: Fn(&S) -> T,
{
    if samples.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let total: T = samples.iter().map(|s| (h1(s) - h2(s)).abs()).sum();
    Ok(total / T::lit(samples.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn col(tape: &mut Tape<f64>, v: &[f64]) -> Var {
        tape.param(Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap())
    }

    fn ce(logits: &[f64], classes: usize, labels: &[usize]) -> Result<f64, ObjectiveError> {
        let mut tape = Tape::new();
        let rows = logits.len() / classes;
        let l = tape.param(Tensor::new(vec![rows, classes], logits.to_vec()).unwrap());
        cross_entropy_loss(&mut tape, l, labels).map(|v| v.value)
    }

    #[test]
    fn cross_entropy_fixtures() {
        assert!((ce(&[0.0; 7], 7, &[3]).unwrap() - 7f64.ln()).abs() < 1e-15);
        // softmax(ln 2, 0) = (2/3, 1/3)
        assert!((ce(&[2f64.ln(), 0.0], 2, &[0]).unwrap() - 0.405_465_108_108_164_4).abs() < 1e-15);
        let stable = ce(&[1000.0, 0.0], 2, &[0]).unwrap();
        assert!(stable.is_finite() && stable.abs() < 1e-300);
    }

    #[test]
    fn cross_entropy_mean_reduction_and_label_check() {
        let two = ce(&[0.0, 0.0, 2f64.ln(), 0.0], 2, &[0, 0]).unwrap();
        let want = (2f64.ln() + 1.5f64.ln()) / 2.0;
        assert!((two - want).abs() < 1e-15);
        assert_eq!(
            ce(&[0.0, 0.0], 2, &[2]).unwrap_err(),
            ObjectiveError::Label {
                row: 0,
                label: 2,
                classes: 2
            }
        );
    }

    #[test]
    fn critic_objective_fixtures() {
        let mut tape = Tape::new();
        let a = col(&mut tape, &[1.0, 2.0]);
        let b = col(&mut tape, &[0.0, 0.0]);
        assert_eq!(critic_objective(&mut tape, a, b).unwrap().value, 1.5);
        assert_eq!(critic_objective(&mut tape, b, a).unwrap().value, -1.5);
        assert_eq!(critic_objective(&mut tape, a, a).unwrap().value, 0.0);

        let c = col(&mut tape, &[1.0]);
        assert_eq!(
            critic_objective(&mut tape, a, c).unwrap_err(),
            ObjectiveError::BatchMismatch(2, 1)
        );
        let empty = tape.constant(Tensor::zeros(&[0, 1]));
        assert_eq!(
            critic_objective(&mut tape, empty, empty).unwrap_err(),
            ObjectiveError::EmptyBatch
        );
    }

    #[test]
    fn wasserstein_loss_fixtures() {
        let mut tape = Tape::new();
        let z = col(&mut tape, &[0.0, 0.0, 0.0]);
        assert_eq!(wasserstein_loss(&mut tape, z).unwrap().value, 0.0);
        let s = col(&mut tape, &[1.0, 3.0]);
        let loss = wasserstein_loss(&mut tape, s).unwrap();
        assert_eq!(loss.value, -2.0);
        let g = tape.backward(loss.var).unwrap();
        assert_eq!(g.wrt(s).data(), &[-0.5, -0.5]);
    }

    #[test]
    fn combined_loss_fixtures() {
        let mut tape = Tape::new();
        let cls = tape.param(Tensor::scalar(2.0).unwrap());
        let w = tape.param(Tensor::scalar(-1.0).unwrap());
        let cls = LossValue { var: cls, value: 2.0 };
        let w = LossValue { var: w, value: -1.0 };
        assert_eq!(combined_loss(&mut tape, cls, w, 1.0, 1.0).unwrap().value, 1.0);
        assert_eq!(combined_loss(&mut tape, cls, w, 1.0, 0.0).unwrap().value, 2.0);
        assert!(matches!(
            combined_loss(&mut tape, cls, w, 1.0, -0.5),
            Err(ObjectiveError::Config(_))
        ));
    }

    #[test]
    fn epsilon_discrepancy_fixtures() {
        let pts = [0.3, -2.0, 7.5];
        assert_eq!(epsilon_discrepancy(|r: &f64| *r, |r: &f64| *r, &pts).unwrap(), 0.0);
        assert_eq!(
            epsilon_discrepancy(|r: &f64| *r, |r: &f64| *r + 1.0, &pts).unwrap(),
            1.0
        );
        assert_eq!(
            epsilon_discrepancy(|r: &f64| *r, |r: &f64| *r, &[] as &[f64]).unwrap_err(),
            ObjectiveError::EmptyBatch
        );
    }

    #[test]
    fn epsilon_discrepancy_against_integral() {
        // h₁(r) = r, h₂(r) = |2r − 1| on [0,1]: ∫ |r − |2r−1|| dr = 1/3 (see below).
        // For r < 1/2: |r − (1 − 2r)| = |3r − 1|; for r ≥ 1/2: |r − (2r − 1)| = 1 − r.
        // ∫₀^½ |3r−1| dr = 1/6 + 1/24 = 5/24; ∫_½^1 (1−r) dr = 1/8. Total = 1/3.
        let n = 1000;
        let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let est = epsilon_discrepancy(|r: &f64| *r, |r: &f64| (2.0 * r - 1.0).abs(), &grid).unwrap();
        assert!((est - 1.0 / 3.0).abs() < 1.0 / n as f64);
    }
}
