//! Evaluation and representation analysis: accuracy, PCA explained variance,
//! and the CSV reports the CLI writes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::autodiff::{matmul_raw, Tensor};
use crate::data::LabeledDataset;
use crate::linalg::symmetric_eigen;
use crate::nn::{ModelParams, NnError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cannot evaluate on an empty dataset")]
    Empty,
    #[error("PCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("data has {data} features but the model expects {model}")]
    Dim { data: usize, model: usize },
    #[error(transparent)]
    Model(#[from] NnError),
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise argmax of an `m×C` logit matrix.
pub fn predictions<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let (rows, _) = logits.dims2().expect("logits are a matrix");
    (0..rows).map(|i| argmax(logits.row(i))).collect()
}

/// Fraction of predictions equal to the labels.
pub fn accuracy_of(preds: &[usize], labels: &[u16]) -> f64 {
    assert_eq!(preds.len(), labels.len());
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(labels).filter(|(p, y)| **p == **y as usize).count();
    hits as f64 / preds.len() as f64
}

const EVAL_CHUNK: usize = 1024;

/// Classifier logits for every sample, computed in chunks.
pub fn dataset_logits<T: Scalar>(model: &ModelParams<T>, ds: &LabeledDataset) -> Result<Tensor<T>, AnalysisError> {
    check_dims(model, ds)?;
    let c = model.classifier.out_dim();
    let mut data = Vec::with_capacity(ds.len() * c);
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(ds.len())).collect();
        let reps = model.represent(&ds.inner().gather(&idx))?;
        data.extend_from_slice(model.logits(&reps)?.data());
    }
    Ok(Tensor::new(vec![ds.len(), c], data).map_err(NnError::from)?)
}

/// Representations `f_e(x)` for every sample.
pub fn dataset_representations<T: Scalar>(
    model: &ModelParams<T>,
    ds: &LabeledDataset,
) -> Result<Tensor<T>, AnalysisError> {
    check_dims(model, ds)?;
    let width = model.extractor.out_dim();
    let mut data = Vec::with_capacity(ds.len() * width);
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(ds.len())).collect();
        data.extend_from_slice(model.represent(&ds.inner().gather(&idx))?.data());
    }
    Ok(Tensor::new(vec![ds.len(), width], data).map_err(NnError::from)?)
}

fn check_dims<T: Scalar>(model: &ModelParams<T>, ds: &LabeledDataset) -> Result<(), AnalysisError> {
    if ds.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if ds.feat_dim() != model.extractor.in_dim() {
        return Err(AnalysisError::Dim {
            data: ds.feat_dim(),
            model: model.extractor.in_dim(),
        });
    }
    Ok(())
}

/// Accuracy of `f_c ∘ f_e` on a labelled dataset.
pub fn evaluate_accuracy<T: Scalar>(model: &ModelParams<T>, ds: &LabeledDataset) -> Result<f64, AnalysisError> {
    let logits = dataset_logits(model, ds)?;
    Ok(accuracy_of(&predictions(&logits), ds.labels()))
}

/// Principal-component spectrum of a set of representations.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaReport {
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `λᵢ / Σλ`; `None` when the data has zero variance.
    pub proportions: Option<Vec<f64>>,
    pub top_k: usize,
}

impl PcaReport {
    pub fn is_degenerate(&self) -> bool {
        self.proportions.is_none()
    }

    /// Share of variance in the first `k` components.
    pub fn cumulative(&self, k: usize) -> Option<f64> {
        self.proportions.as_ref().map(|p| p.iter().take(k).sum())
    }

    /// Share of variance in the first `top_k` components.
    pub fn top_k_proportion(&self) -> Option<f64> {
        self.cumulative(self.top_k)
    }

    /// `component,eigenvalue,proportion,cumulative`, one row per component.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,eigenvalue,proportion,cumulative\n");
        let mut cum = 0.0;
        for (i, ev) in self.eigenvalues.iter().enumerate() {
            match &self.proportions {
                Some(p) => {
                    cum += p[i];
                    writeln!(out, "{},{},{},{}", i + 1, ev, p[i], cum).expect("write to string");
                }
                None => writeln!(out, "{},{},,", i + 1, ev).expect("write to string"),
            }
        }
        out
    }
}

/// PCA of the rows of `reps` (`k×d`) via the `1/(k−1)` sample covariance.
pub fn pca_explained_variance<T: Scalar>(reps: &Tensor<T>, top_k: usize) -> Result<PcaReport, AnalysisError> {
    let (k, d) = reps.dims2().map_err(NnError::from)?;
    if k < 2 {
        return Err(AnalysisError::TooFewRows(k));
    }
    let x: Vec<f64> = reps.data().iter().map(|v| v.as_f64()).collect();
    let mut mean = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k as f64;
    }
    let centered: Vec<f64> = x
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m))
        .collect();
    let c = Tensor::new(vec![k, d], centered).map_err(NnError::from)?;
    let gram = matmul_raw(&c, true, &c, false).map_err(NnError::from)?;
    let cov: Vec<f64> = gram.data().iter().map(|v| v / (k as f64 - 1.0)).collect();

    let eigenvalues: Vec<f64> = symmetric_eigen(&cov, d)
        .values
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    let proportions = (total > 0.0).then(|| eigenvalues.iter().map(|v| v / total).collect());
    Ok(PcaReport {
        eigenvalues,
        proportions,
        top_k,
    })
}

/// Top-`k` explained-variance share of two models' representations of the same data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PurityComparison {
    pub purified: Option<f64>,
    pub baseline: Option<f64>,
}

pub fn purity_comparison<T: Scalar>(
    purified: &ModelParams<T>,
    baseline: &ModelParams<T>,
    eval: &LabeledDataset,
    k: usize,
) -> Result<PurityComparison, AnalysisError> {
    let share = |m: &ModelParams<T>| -> Result<Option<f64>, AnalysisError> {
        Ok(pca_explained_variance(&dataset_representations(m, eval)?, k)?.top_k_proportion())
    };
    Ok(PurityComparison {
        purified: share(purified)?,
        baseline: share(baseline)?,
    })
}

/// One line of `eval_report.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub accuracy: f64,
    pub n: usize,
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("dataset,accuracy,n\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.dataset, r.accuracy, r.n).expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_lowest_class() {
        assert_eq!(argmax(&[0.3, 0.3]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(argmax(&[-1.0f32]), 0);
    }

    #[test]
    fn accuracy_counts_hits() {
        assert_eq!(accuracy_of(&[0, 1, 2], &[0, 1, 2]), 1.0);
        assert_eq!(accuracy_of(&[0, 0, 0, 0], &[0, 1, 0, 1]), 0.5);
    }

    #[test]
    fn line_in_plane_has_one_component() {
        let reps = Tensor::new(vec![4, 2], vec![0.0, 0.0, 1.0, 2.0, 2.0, 4.0, -3.0, -6.0]).unwrap();
        let r = pca_explained_variance(&reps, 1).unwrap();
        assert!((r.top_k_proportion().unwrap() - 1.0).abs() < 1e-12);
        let total: f64 = r.proportions.unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_rows_are_flagged() {
        let reps = Tensor::new(vec![3, 2], vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let r = pca_explained_variance(&reps, 2).unwrap();
        assert!(r.is_degenerate());
        assert_eq!(r.top_k_proportion(), None);
        assert!(r.to_csv().lines().nth(1).unwrap().ends_with(",,"));
    }

    #[test]
    fn single_row_is_an_error() {
        let reps = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            pca_explained_variance(&reps, 1),
            Err(AnalysisError::TooFewRows(1))
        ));
    }

    #[test]
    fn csv_shapes() {
        let reps = Tensor::new(vec![3, 2], vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let csv = pca_explained_variance(&reps, 1).unwrap().to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("component,eigenvalue,proportion,cumulative\n"));
        let e = eval_csv(&[EvalRow {
            dataset: "test".into(),
            accuracy: 0.5,
            n: 4,
        }]);
        assert_eq!(e, "dataset,accuracy,n\ntest,0.5,4\n");
    }
}
