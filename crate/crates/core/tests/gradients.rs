mod support;

use support::grad::{sweep, CASES};

#[test]
fn every_piece_matches_central_differences() {
    for (i, (name, case)) in CASES.iter().enumerate() {
        let (worst, checked) = sweep(*case, 20, 100 + i as u64);
        assert!(checked > 0, "{name}: every coordinate was skipped");
        assert!(worst < 1e-4, "{name}: max relative error {worst:e}");
    }
}

mod tape_properties {
    use super::support::random_tensor;
    use purified::autodiff::{Tape, Tensor};
    use purified::nn::{Mlp, MlpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net_and_input(seed: u64) -> (Mlp<f64>, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::init(&MlpSpec::new(vec![3, 8, 1]), &mut rng).unwrap();
        (net, random_tensor(&mut rng, &[5, 3], 1.0))
    }

    #[test]
    fn gradient_of_a_sum_is_the_sum_of_gradients() {
        let (net, x) = net_and_input(1);
        let w = random_tensor(&mut ChaCha8Rng::seed_from_u64(2), &[5, 1], 1.0);
        let grads = |which: u8| {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape, true);
            let xv = tape.constant(x.clone());
            let out = bound.forward(&mut tape, xv).unwrap();
            let sq = tape.mul(out, out).unwrap();
            let wv = tape.constant(w.clone());
            let lin = tape.mul(out, wv).unwrap();
            let first = tape.sum(sq).unwrap();
            let second = tape.sum(lin).unwrap();
            let root = match which {
                0 => first,
                1 => second,
                _ => tape.add(first, second).unwrap(),
            };
            bound.grads(&tape.backward(root).unwrap())
        };
        let (a, b, both) = (grads(0), grads(1), grads(2));
        for ((ga, gb), gs) in a.iter().zip(&b).zip(&both) {
            for ((x, y), s) in ga.data().iter().zip(gb.data()).zip(gs.data()) {
                assert!((x + y - s).abs() <= 1e-12 * (1.0 + s.abs()));
            }
        }
    }

    #[test]
    fn forward_and_backward_are_bit_identical_on_rerun() {
        let (net, x) = net_and_input(3);
        let run = || {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape, true);
            let xv = tape.constant(x.clone());
            let out = bound.forward(&mut tape, xv).unwrap();
            let root = tape.mean(out).unwrap();
            let value = tape.value(root).clone();
            (value, bound.grads(&tape.backward(root).unwrap()))
        };
        assert_eq!(run(), run());
    }
}
