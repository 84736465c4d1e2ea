mod common;

use std::collections::VecDeque;

use proptest::prelude::*;

use spnpb::data::Record;
use spnpb::model::{
    layer_spec, NormalizationStats, ParametricBias, PbTable, SpnpbConfig, SpnpbModel, Variant,
};
use spnpb::net::{Mlp, MomentumConfig};
use spnpb::updater::{bias_loss_and_gradient, PbUpdater, UpdaterConfig};

/// MSE model with no hidden layer: `s = W [u; p] + b` with identity
/// normalization, so the bias objective is a convex quadratic.
fn linear_model(seed: u64) -> SpnpbModel {
    let cfg = SpnpbConfig {
        n_u: 2,
        n_p: 2,
        n_v: 2,
        n_tau: 1,
        hidden: vec![],
    };
    let spec = layer_spec(&cfg, Variant::Pb).unwrap();
    let mut rng = common::rng(seed);
    let params = common::uniform(&mut rng, -1.0, 1.0, spec.param_count());
    let norm = NormalizationStats::identity(2, 3);
    SpnpbModel::from_parts(
        cfg,
        Variant::Pb,
        Mlp::from_params(spec, params).unwrap(),
        norm,
        PbTable::new(),
    )
    .unwrap()
}

fn observations(model: &SpnpbModel, p_true: &[f64], n: usize, seed: u64) -> Vec<Record> {
    let mut rng = common::rng(seed);
    (0..n)
        .map(|_| {
            let u = common::uniform(&mut rng, -1.0, 1.0, 2);
            let mut s = model.predict(&u, p_true).unwrap().mean;
            s.iter_mut()
                .for_each(|x| *x += rand::Rng::random_range(&mut rng, -0.1..0.1));
            Record { u, s }
        })
        .collect()
}

/// Least-squares bias: solve `(A^T A) p = A^T r` where `A` is the bias block
/// of `W` and `r` the mean residual with `p = 0`.
fn closed_form(model: &SpnpbModel, records: &[Record]) -> [f64; 2] {
    let w = model.net().weights(0);
    let a = |o: usize, j: usize| w[o * 4 + 2 + j];
    let mut r = [0.0; 3];
    for rec in records {
        let base = model.predict(&rec.u, &[0.0, 0.0]).unwrap().mean;
        for o in 0..3 {
            r[o] += (rec.s[o] - base[o]) / records.len() as f64;
        }
    }
    let m = |i: usize, j: usize| (0..3).map(|o| a(o, i) * a(o, j)).sum::<f64>();
    let rhs = |i: usize| (0..3).map(|o| a(o, i) * r[o]).sum::<f64>();
    let det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    [
        (m(1, 1) * rhs(0) - m(0, 1) * rhs(1)) / det,
        (m(0, 0) * rhs(1) - m(1, 0) * rhs(0)) / det,
    ]
}

#[test]
fn converges_to_the_least_squares_bias() {
    for seed in 0..5 {
        let model = linear_model(seed);
        let records = observations(&model, &[0.6, -0.4], 200, seed + 100);
        let expected = closed_form(&model, &records);
        let mut up = PbUpdater::new(UpdaterConfig::default(), 2).unwrap();
        // stream the 200 observations, then keep updating on the full buffer
        for r in &records {
            up.observe(&model, r.clone()).unwrap();
        }
        for _ in 0..2000 {
            up.maybe_update(&model).unwrap();
        }
        let got = up.bias();
        assert!(
            (got[0] - expected[0]).abs() < 1e-3 && (got[1] - expected[1]).abs() < 1e-3,
            "seed {seed}: {got:?} vs {expected:?}"
        );
    }
}

#[test]
fn optimum_is_a_fixed_point() {
    let model = linear_model(7);
    let records = observations(&model, &[-0.3, 0.2], 150, 8);
    let p = closed_form(&model, &records);
    let mut up =
        PbUpdater::with_bias(UpdaterConfig::default(), ParametricBias::new(p.to_vec())).unwrap();
    for r in &records {
        up.push(r.clone());
    }
    let (_, grad) = bias_loss_and_gradient(&model, up.buffer().iter(), up.bias()).unwrap();
    assert!(common::norm(&grad) < 1e-12);
    let steps = up.maybe_update(&model).unwrap();
    assert_eq!(steps.len(), 3);
    assert!(steps
        .iter()
        .all(|s| s.distance(&ParametricBias::new(p.to_vec())) < 1e-12));
}

#[test]
fn weights_are_never_touched() {
    let model = linear_model(9);
    let before = model.net().params().to_vec();
    let mut up = PbUpdater::new(UpdaterConfig::default(), 2).unwrap();
    for r in observations(&model, &[1.0, 1.0], 150, 10) {
        up.observe(&model, r).unwrap();
    }
    assert_eq!(model.net().params(), &before[..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn buffer_matches_a_list_oracle(
        capacity in 1usize..20,
        extra in 0usize..10,
        epochs in 1usize..4,
        pushes in 0usize..60,
    ) {
        let threshold = capacity.saturating_sub(extra).max(1);
        let cfg = UpdaterConfig {
            threshold,
            capacity,
            epochs,
            momentum: MomentumConfig::default(),
        };
        let model = linear_model(1);
        let mut up = PbUpdater::new(cfg, 2).unwrap();
        let mut oracle: VecDeque<Vec<f64>> = VecDeque::new();
        for i in 0..pushes {
            let rec = Record { u: vec![i as f64 * 0.01, 0.0], s: vec![0.0; 3] };
            oracle.push_back(rec.u.clone());
            if oracle.len() > capacity {
                oracle.pop_front();
            }
            let steps = up.observe(&model, rec).unwrap();
            let expected = if oracle.len() >= threshold { epochs } else { 0 };
            prop_assert_eq!(steps.len(), expected);
            let held: Vec<Vec<f64>> = up.buffer().iter().map(|r| r.u.clone()).collect();
            prop_assert_eq!(&held, &oracle.iter().cloned().collect::<Vec<_>>());
        }
    }

    #[test]
    fn bias_gradient_matches_finite_differences(seed in any::<u64>(), variant in prop::sample::select(vec![Variant::PbSt, Variant::Pb])) {
        let mut rng = common::rng(seed);
        let cfg = common::tiny_config();
        let model = common::random_model(&mut rng, cfg.clone(), variant);
        let records: Vec<Record> = common::random_records(&mut rng, &cfg, 6).into_iter().map(|(r, _)| r).collect();
        let mut p = common::uniform(&mut rng, -1.0, 1.0, cfg.n_p);
        let (_, grad) = bias_loss_and_gradient(&model, &records, &ParametricBias::new(p.clone())).unwrap();
        let fd = common::central_difference(&mut p, |x| {
            bias_loss_and_gradient(&model, &records, &ParametricBias::new(x.to_vec())).unwrap().0
        });
        prop_assert!(common::relative_error(&grad, &fd) < 1e-5);
    }
}
