mod support;

use purified::data::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn gen(cfg: SyntheticGenConfig) -> SyntheticSplits {
    generate_synthetic_biased(&cfg).unwrap()
}

fn small(rho: f64) -> SyntheticGenConfig {
    SyntheticGenConfig {
        n_train: 10_000,
        n_test: 10_000,
        n_source: 5_000,
        rho,
        ..SyntheticGenConfig::default()
    }
}

fn contingency(rows: &[u16], cols: &[u16], r: usize, c: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; c]; r];
    for (&a, &b) in rows.iter().zip(cols) {
        t[a as usize][b as usize] += 1.0;
    }
    t
}

fn nuisance(ds: &LabeledDataset) -> &[u16] {
    ds.inner().nuisance_labels().expect("generator records nuisance labels")
}

#[test]
fn full_correlation_follows_the_bias_map() {
    let cfg = SyntheticGenConfig {
        n_train: 500,
        n_test: 10,
        n_source: 50,
        rho: 1.0,
        ..SyntheticGenConfig::default()
    };
    let s = gen(cfg.clone());
    for (y, t) in s.train.labels().iter().zip(nuisance(&s.train)) {
        assert_eq!(*t as usize, cfg.bias_map(*y as usize));
    }
}

#[test]
fn zero_correlation_passes_chi_square_independence() {
    let s = gen(small(0.0));
    let (c, n) = (10, 5);
    let t = contingency(s.train.labels(), nuisance(&s.train), c, n);
    let total: f64 = t.iter().flatten().sum();
    let row: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..n).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for i in 0..c {
        for j in 0..n {
            let e = row[i] * col[j] / total;
            stat += (t[i][j] - e).powi(2) / e;
        }
    }
    let dof = ((c - 1) * (n - 1)) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat} on {dof} dof, p = {p}");
}

#[test]
fn biased_rate_matches_rho() {
    let s = gen(small(0.95));
    let cfg = small(0.95);
    let hits = s
        .train
        .labels()
        .iter()
        .zip(nuisance(&s.train))
        .filter(|(y, t)| **t as usize == cfg.bias_map(**y as usize))
        .count();
    let rate = hits as f64 / s.train.len() as f64;
    let expected = 0.95 + 0.05 / cfg.num_nuisance as f64;
    assert!((rate - expected).abs() < 0.01, "{rate} vs {expected}");
}

#[test]
fn test_split_has_negligible_mutual_information() {
    let s = gen(small(0.95));
    let (c, n) = (10, 5);
    let t = contingency(s.test.labels(), nuisance(&s.test), c, n);
    let total: f64 = t.iter().flatten().sum();
    let row: Vec<f64> = t.iter().map(|r| r.iter().sum::<f64>() / total).collect();
    let col: Vec<f64> = (0..n).map(|j| t.iter().map(|r| r[j]).sum::<f64>() / total).collect();
    let mut mi = 0.0;
    for i in 0..c {
        for j in 0..n {
            let p = t[i][j] / total;
            if p > 0.0 {
                mi += p * (p / (row[i] * col[j])).ln();
            }
        }
    }
    assert!(mi < 0.01, "plug-in mutual information {mi}");
}

/// Two-sample energy statistic on the line.
fn energy(a: &[f64], b: &[f64]) -> f64 {
    let mean_gap = |x: &[f64], y: &[f64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).abs()).sum::<f64>())
            .sum::<f64>()
            / (x.len() * y.len()) as f64
    };
    2.0 * mean_gap(a, b) - mean_gap(a, a) - mean_gap(b, b)
}

#[test]
fn source_task_factor_is_independent_of_nuisance_class() {
    let s = gen(small(0.95));
    let ds = s.source.inner();
    let latent: Vec<f64> = (0..ds.len())
        .map(|i| ds.latent(i, LATENT_TASK).unwrap() as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut everyone = latent.clone();
    everyone.shuffle(&mut rng);
    let reference = &everyone[..300];
    for class in 0..s.source.num_nuisance() {
        let members: Vec<f64> = s
            .source
            .class_indices(class)
            .iter()
            .take(300)
            .map(|&i| latent[i])
            .collect();
        let observed = energy(&members, reference);
        let mut pooled: Vec<f64> = members.iter().chain(reference).copied().collect();
        let perms = 199;
        let mut at_least = 0;
        for _ in 0..perms {
            pooled.shuffle(&mut rng);
            let (x, y) = pooled.split_at(members.len());
            if energy(x, y) >= observed {
                at_least += 1;
            }
        }
        let p = (at_least + 1) as f64 / (perms + 1) as f64;
        // Five classes tested: Bonferroni at 0.01 overall.
        assert!(p > 0.002, "class {class}: energy {observed}, p = {p}");
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let cfg = SyntheticGenConfig {
        n_train: 300,
        n_test: 100,
        n_source: 200,
        ..SyntheticGenConfig::default()
    };
    assert_eq!(gen(cfg.clone()), gen(cfg.clone()));
    let other = gen(SyntheticGenConfig { seed: 1, ..cfg.clone() });
    assert_ne!(other.train, gen(cfg).train);
}

#[test]
fn impossible_separation_is_an_error() {
    let cfg = SyntheticGenConfig {
        d_task: 1,
        num_classes: 3,
        ..SyntheticGenConfig::default()
    };
    assert!(matches!(
        generate_synthetic_biased(&cfg),
        Err(DataError::Separation { count: 3, .. })
    ));
}

fn source() -> NuisanceDataset {
    gen(SyntheticGenConfig {
        n_train: 50,
        n_test: 10,
        n_source: 400,
        ..SyntheticGenConfig::default()
    })
    .source
}

#[test]
fn batch_b_frequencies_match_the_source() {
    let src = source();
    let n = src.num_nuisance();
    let mut counts = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 100_000;
    for _ in 0..draws / 1000 {
        for l in sample_batch_b::<f32>(&src, 1000, &mut rng).unwrap().labels {
            counts[l] += 1;
        }
    }
    for (c, count) in counts.iter().enumerate() {
        let want = src.class_indices(c).len() as f64 / src.len() as f64;
        let got = *count as f64 / draws as f64;
        assert!((got - want).abs() <= 0.02 * want, "class {c}: {got} vs {want}");
    }
}

#[test]
fn batch_c_frequencies_match_the_target() {
    let s = gen(small(0.95));
    let c = s.train.num_classes();
    let mut want = vec![0.0; c];
    for &y in s.train.labels() {
        want[y as usize] += 1.0 / s.train.len() as f64;
    }
    let mut got = vec![0.0; c];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 100_000;
    for _ in 0..draws / 1000 {
        for y in sample_batch_c::<f32>(&s.train, 1000, &mut rng).unwrap().labels {
            got[y] += 1.0 / draws as f64;
        }
    }
    for k in 0..c {
        assert!(
            (got[k] - want[k]).abs() <= 0.02 * want[k],
            "class {k}: {} vs {}",
            got[k],
            want[k]
        );
    }
}

#[test]
fn batch_a_stays_in_its_class() {
    let src = source();
    let class = src.most_frequent_class();
    let size = src.class_indices(class).len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let big = sample_batch_a::<f64>(&src, class, size * 3, &mut rng).unwrap();
    assert_eq!(big.indices.len(), size * 3);
    assert_eq!(big.x.shape(), &[size * 3, src.inner().feat_dim()]);
    assert!(big.indices.iter().all(|&i| src.labels()[i] as usize == class));
    let again = |seed| sample_batch_a::<f64>(&src, class, 16, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    assert_eq!(again(4).indices, again(4).indices);
    assert!(matches!(
        sample_batch_a::<f64>(&src, 99, 4, &mut rng),
        Err(DataError::EmptyClass(99))
    ));
}

#[test]
fn single_sample_batches() {
    let src = source();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b = sample_batch_b::<f64>(&src, 1, &mut rng).unwrap();
    assert_eq!(b.x.shape(), &[1, src.inner().feat_dim()]);
    assert!(b.labels[0] < src.num_nuisance());
}

#[test]
fn empty_sets_cannot_be_sampled() {
    let empty = LabeledDataset::new(Dataset::new(3, vec![], Some(vec![]), None, 2, 0).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        sample_batch_c::<f64>(&empty, 1, &mut rng),
        Err(DataError::Empty)
    ));
}

#[test]
fn holdout_split_partitions_the_set() {
    let s = gen(small(0.95));
    let (kept, held) = s.train.split_holdout(0.1, 7);
    assert_eq!(held.len(), 1000);
    assert_eq!(kept.len() + held.len(), s.train.len());
    let (kept2, held2) = s.train.split_holdout(0.1, 7);
    assert_eq!((kept, held), (kept2, held2));
}
