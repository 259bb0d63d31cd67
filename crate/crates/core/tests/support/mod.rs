#![allow(dead_code)]

use purified::autodiff::Tensor;
use purified::config::RunConfig;
use purified::otoracle::EmpiricalDistribution;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Small benchmark that trains in well under a second.
pub fn tiny_cfg() -> RunConfig {
    RunConfig {
        n_train: 160,
        n_test: 80,
        n_source: 120,
        d_task: 4,
        d_nuis: 4,
        num_classes: 3,
        num_nuisance: 2,
        extractor_hidden: vec![12],
        m: 8,
        epochs: 3,
        n1: Some(4),
        ..RunConfig::default()
    }
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

pub fn random_cloud(rng: &mut impl Rng, k: usize, d: usize) -> EmpiricalDistribution {
    EmpiricalDistribution::new(random_tensor(rng, &[k, d], 2.0)).unwrap()
}

/// Minimum over every permutation of the mean matched distance (Heap's algorithm).
pub fn brute_force_w1(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let k = a.len();
    let dist = |i: usize, j: usize| -> f64 {
        a.point(i)
            .iter()
            .zip(b.point(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut perm: Vec<usize> = (0..k).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| dist(i, j)).sum::<f64>();
    let mut best = cost(&perm);
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / k as f64
}

/// Random orthogonal matrix: Gram–Schmidt on a Gaussian matrix.
pub fn random_rotation(rng: &mut impl Rng, d: usize) -> Tensor<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let data = (0..d).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
    Tensor::new(vec![d, d], data).unwrap()
}

pub mod audit;
pub mod axioms;
pub mod grad;
