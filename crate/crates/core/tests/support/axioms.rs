//! Metric-axiom checks on the exact W1 oracles, shared by proptest suites.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use purified::autodiff::Tensor;
use purified::otoracle::{w1_exact, w1_exact_assignment, EmpiricalDistribution};

pub fn cloud(points: &[f64], d: usize) -> EmpiricalDistribution {
    EmpiricalDistribution::new(Tensor::new(vec![points.len() / d, d], points.to_vec()).unwrap()).unwrap()
}

/// Three clouds of a common size `k` in dimension `d`, flattened.
pub fn triple() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=7, 1usize..=3).prop_flat_map(|(k, d)| {
        let pts = prop::collection::vec(-5.0f64..5.0, k * d);
        (Just(d), pts.clone(), pts.clone(), pts)
    })
}

fn both(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> [f64; 2] {
    [w1_exact_assignment(a, b).unwrap(), w1_exact(a, b).unwrap()]
}

/// Non-negativity, symmetry, triangle inequality and zero self-distance.
pub fn metric_axioms(d: usize, p: &[f64], q: &[f64], r: &[f64]) -> Result<(), TestCaseError> {
    let (a, b, c) = (cloud(p, d), cloud(q, d), cloud(r, d));
    let (ab, ba, bc, ac) = (both(&a, &b), both(&b, &a), both(&b, &c), both(&a, &c));
    for i in 0..2 {
        prop_assert!(ab[i] >= 0.0);
        prop_assert!((ab[i] - ba[i]).abs() <= 1e-12);
        prop_assert!(ac[i] <= ab[i] + bc[i] + 1e-12);
    }
    prop_assert_eq!(both(&a, &a), [0.0, 0.0]);
    Ok(())
}

/// Zero for a permuted copy, positive once one coordinate moves.
pub fn zero_iff_equal(d: usize, p: &[f64], shift: usize, bump: f64) -> Result<(), TestCaseError> {
    let a = cloud(p, d);
    let k = p.len() / d;
    let mut rows: Vec<Vec<f64>> = (0..k).map(|i| a.point(i).to_vec()).collect();
    rows.rotate_left(shift % k);
    let permuted = EmpiricalDistribution::from_rows(&rows).unwrap();
    prop_assert_eq!(both(&a, &permuted), [0.0, 0.0]);
    rows[0][0] += bump;
    let moved = EmpiricalDistribution::from_rows(&rows).unwrap();
    for v in both(&a, &moved) {
        prop_assert!(v > 0.0);
    }
    Ok(())
}
