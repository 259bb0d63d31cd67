//! Observer that checks goal separation and the clip bound around every update.

use purified::nn::ModelParams;
use purified::train::{param_hash, Observer, Phase, StepContext};

pub struct Auditor {
    clip: f64,
    clip_biases: bool,
    hashes: Option<[u64; 3]>,
    /// Critic, goal-1 and goal-2 updates seen.
    pub seen: [usize; 3],
}

impl Auditor {
    pub fn new(clip: f64, clip_biases: bool) -> Self {
        Self {
            clip,
            clip_biases,
            hashes: None,
            seen: [0; 3],
        }
    }
}

fn hashes(m: &ModelParams<f64>) -> [u64; 3] {
    [
        param_hash(&m.extractor),
        param_hash(&m.classifier),
        param_hash(&m.critic),
    ]
}

impl Observer<f64> for Auditor {
    fn before(&mut self, _: Phase, _: StepContext, m: &ModelParams<f64>) {
        self.hashes = Some(hashes(m));
    }

    fn after(&mut self, phase: Phase, ctx: StepContext, m: &ModelParams<f64>) {
        let [e0, c0, d0] = self.hashes.take().expect("before precedes after");
        let [e1, c1, d1] = hashes(m);
        match phase {
            Phase::Critic => {
                assert_eq!((e0, c0), (e1, c1), "critic update touched θ_e/θ_c at {ctx:?}");
                assert!(
                    m.critic.max_abs_weight(self.clip_biases) <= self.clip,
                    "clip violated at {ctx:?}"
                );
                self.seen[0] += 1;
            }
            Phase::Goal1 => {
                assert_eq!(d0, d1, "classification update touched θ_d at {ctx:?}");
                self.seen[1] += 1;
            }
            Phase::Goal2 => {
                assert_eq!((c0, d0), (c1, d1), "wasserstein update touched θ_c/θ_d at {ctx:?}");
                self.seen[2] += 1;
            }
        }
    }
}
