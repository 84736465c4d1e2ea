mod common;

use proptest::prelude::*;

use common::{central_difference, relative_error};
use spnpb::net::{Adam, AdamConfig, LayerSpec, Mlp, MomentumConfig, MomentumSgd};

fn arb_net() -> impl Strategy<Value = (Vec<usize>, u64, usize)> {
    (
        prop::collection::vec(1usize..6, 2..5),
        any::<u64>(),
        1usize..4,
    )
}

/// `sum(output * g)` so that its gradient is the backward pass of `g`.
fn contracted(net: &Mlp, x: &[f64], rows: usize, g: &[f64]) -> f64 {
    let out = net.forward_batch(x, rows).unwrap().into_output();
    out.iter().zip(g).map(|(a, b)| a * b).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_matches_finite_differences((sizes, seed, rows) in arb_net()) {
        let mut rng = common::rng(seed);
        let spec = LayerSpec::new(sizes).unwrap();
        let net = Mlp::glorot(spec.clone(), seed);
        let x = common::uniform(&mut rng, -1.0, 1.0, rows * spec.input_width());
        let g = common::uniform(&mut rng, -1.0, 1.0, rows * spec.output_width());

        let trace = net.forward_batch(&x, rows).unwrap();
        let mut dw = vec![0.0; net.params().len()];
        let dx = net.backward_batch(&trace, &g, Some(&mut dw)).unwrap();

        let mut params = net.params().to_vec();
        let fd_w = central_difference(&mut params, |w| {
            let n = Mlp::from_params(spec.clone(), w.to_vec()).unwrap();
            contracted(&n, &x, rows, &g)
        });
        let fd_x = central_difference(&mut x.clone(), |xi| contracted(&net, xi, rows, &g));
        prop_assert!(relative_error(&dw, &fd_w) < 1e-6, "weights: {}", relative_error(&dw, &fd_w));
        prop_assert!(relative_error(&dx, &fd_x) < 1e-6, "inputs: {}", relative_error(&dx, &fd_x));
    }

    #[test]
    fn batch_equals_row_by_row((sizes, seed, rows) in arb_net()) {
        let mut rng = common::rng(seed);
        let spec = LayerSpec::new(sizes).unwrap();
        let net = Mlp::glorot(spec.clone(), seed);
        let x = common::uniform(&mut rng, -1.0, 1.0, rows * spec.input_width());
        let batch = net.forward_batch(&x, rows).unwrap().into_output();
        for (r, row) in x.chunks_exact(spec.input_width()).enumerate() {
            let (single, _) = net.forward(row).unwrap();
            let w = spec.output_width();
            for (a, b) in single.iter().zip(&batch[r * w..(r + 1) * w]) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn glorot_respects_fan_limits(sizes in prop::collection::vec(1usize..30, 2..5), seed in any::<u64>()) {
        let net = Mlp::glorot(LayerSpec::new(sizes.clone()).unwrap(), seed);
        for l in 0..sizes.len() - 1 {
            let limit = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            prop_assert!(net.weights(l).iter().all(|w| w.abs() <= limit));
            prop_assert!(net.biases(l).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn momentum_matches_closed_form(g in -5.0f64..5.0, mu in 0.0f64..0.95, steps in 1usize..20) {
        // constant gradient: x_k = -rate * g * sum_{j<k} (1 - mu^(j+1)) / (1 - mu)
        let rate = 1e-2;
        let mut opt = MomentumSgd::new(MomentumConfig { rate, momentum: mu }, 1);
        let mut x = [0.0];
        for _ in 0..steps {
            opt.step(&mut x, &[g]).unwrap();
        }
        let expected: f64 = -rate * g * (1..=steps).map(|k| (1.0 - mu.powi(k as i32)) / (1.0 - mu)).sum::<f64>();
        prop_assert!((x[0] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn adam_steps_are_bounded_by_rate(grads in prop::collection::vec(-100.0f64..100.0, 1..30)) {
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg, 1);
        let mut x = [0.0];
        for g in &grads {
            let before = x[0];
            opt.step(&mut x, &[*g]).unwrap();
            // bias-corrected Adam never moves much beyond its rate per step
            prop_assert!((x[0] - before).abs() <= 10.0 * cfg.rate);
        }
    }
}

#[test]
fn linear_network_is_affine_map() {
    let spec = LayerSpec::new(vec![3, 2]).unwrap();
    let params: Vec<f64> = (0..spec.param_count())
        .map(|i| i as f64 * 0.1 - 0.3)
        .collect();
    let net = Mlp::from_params(spec, params).unwrap();
    let (y, _) = net.forward(&[1.0, -2.0, 0.5]).unwrap();
    let w = net.weights(0);
    let b = net.biases(0);
    let x = [1.0, -2.0, 0.5];
    for o in 0..2 {
        let expected: f64 = (0..3).map(|i| w[o * 3 + i] * x[i]).sum::<f64>() + b[o];
        assert!((y[o] - expected).abs() < 1e-12);
    }
}
