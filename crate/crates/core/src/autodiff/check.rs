use crate::scalar::Scalar;

use super::{AutodiffError, Tape, Tensor, Var};

/// Keeps derivatives below finite-difference resolution from dominating the
/// relative error; for them the comparison is effectively absolute.
pub const REL_FLOOR: f64 = 1e-8;

/// Outcome of a central-difference gradient sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdReport<T> {
    /// max |analytic − central| / (|analytic| + |central| + REL_FLOOR)
    pub max_rel_err: T,
    pub checked: usize,
    /// Coordinates whose ±h probe crossed (or sat on) a relu kink.
    pub skipped: usize,
}

/// Compares tape gradients of `f` against central finite differences,
/// coordinate by coordinate over every tensor in `params`.
///
/// `f` receives a fresh tape and the leaf handles of `params` in order, and
/// must return a scalar node. Coordinates where the probe changes any relu
/// sign pattern, or where an input lies exactly on a kink, are skipped.
pub fn finite_diff_check<T, F>(f: F, params: &[Tensor<T>], h: T) -> Result<FdReport<T>, AutodiffError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, AutodiffError>,
{
    let eval = |ps: &[Tensor<T>]| -> Result<(T, Vec<bool>, bool), AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let value = tape
            .value(out)
            .item()
            .ok_or_else(|| AutodiffError::NonScalarRoot(tape.value(out).shape().to_vec()))?;
        let (pattern, kink) = tape.relu_pattern();
        Ok((value, pattern, kink))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let (base_pattern, base_kink) = tape.relu_pattern();
    let grads = tape.backward(root)?;

    let floor = T::lit(REL_FLOOR);
    let two_h = h + h;
    let mut report = FdReport {
        max_rel_err: T::zero(),
        checked: 0,
        skipped: 0,
    };
    let mut probe: Vec<Tensor<T>> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            probe[pi].data_mut()[j] = orig + h;
            let (fp, pat_p, kink_p) = eval(&probe)?;
            probe[pi].data_mut()[j] = orig - h;
            let (fm, pat_m, kink_m) = eval(&probe)?;
            probe[pi].data_mut()[j] = orig;

            if base_kink || kink_p || kink_m || pat_p != base_pattern || pat_m != base_pattern {
                report.skipped += 1;
                continue;
            }
            let central = (fp - fm) / two_h;
            let a = analytic.data()[j];
            let rel = (a - central).abs() / (a.abs() + central.abs() + floor);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
