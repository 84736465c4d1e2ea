mod common;

use std::path::Path;

use proptest::prelude::*;

use spnpb::control::ControlConfig;
use spnpb::data::{Record, TrialDataset};
use spnpb::error::Error;
use spnpb::experiments::{
    eval_with, run_eval_sim, trial_from_text, trial_to_text, Checkpoint, EvalEntry, EvalReport,
    ExperimentConfig, Scenario, SimObjective,
};
use spnpb::model::{layer_spec, SpnpbConfig, Variant};
use spnpb::sim::WorldState;

const SANITY_MAX_M: f64 = 0.05;

fn checkpoint(seed: u64, variant: Variant) -> Checkpoint {
    let mut rng = common::rng(seed);
    let model = common::random_model(&mut rng, common::tiny_config(), variant);
    let mut ckpt = Checkpoint::new(model);
    ckpt.labels.insert(0, "E0-B0".into());
    ckpt.labels.insert(1, "E1-B1".into());
    ckpt
}

#[test]
fn checkpoints_round_trip_exactly() {
    for (seed, variant) in Variant::ALL.into_iter().enumerate() {
        let ckpt = checkpoint(seed as u64, variant);
        let text = ckpt.to_text().unwrap();
        let back = Checkpoint::from_text(&text, Path::new("m.ckpt")).unwrap();
        assert_eq!(back.to_text().unwrap(), text);
        assert_eq!(back.model.net().params(), ckpt.model.net().params());
        assert_eq!(back.labels, ckpt.labels);
        let mut rng = common::rng(99);
        for _ in 0..100 {
            let u = common::uniform(&mut rng, -2.0, 2.0, 2);
            let p = common::uniform(&mut rng, -1.0, 1.0, 2);
            let (a, b) = (
                ckpt.model.predict(&u, &p).unwrap(),
                back.model.predict(&u, &p).unwrap(),
            );
            assert_eq!(a, b);
        }
    }
}

#[test]
fn corrupted_checkpoints_give_distinct_errors() {
    let text = checkpoint(1, Variant::PbSt).to_text().unwrap();
    let path = Path::new("m.ckpt");

    let bad_dims = text.replacen("layer 0 4 4", "layer 0 4 5", 1);
    assert_ne!(bad_dims, text);
    assert!(matches!(
        Checkpoint::from_text(&bad_dims, path),
        Err(Error::DimensionMismatch { .. })
    ));

    let short_row = text.replacen("n_v 3", "n_v 4", 1);
    assert!(matches!(
        Checkpoint::from_text(&short_row, path),
        Err(Error::DimensionMismatch { .. })
    ));

    let cut: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
    assert!(matches!(
        Checkpoint::from_text(&cut, path),
        Err(Error::Truncated { .. })
    ));

    let future = text.replacen("version 1", "version 9", 1);
    assert!(matches!(
        Checkpoint::from_text(&future, path),
        Err(Error::Version { .. })
    ));

    let garbled = text.replacen("bias ", "bias x", 1);
    match Checkpoint::from_text(&garbled, path) {
        Err(Error::Parse { path, line, .. }) => {
            assert_eq!(path, Path::new("m.ckpt"));
            assert!(line > 1);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn ablation_variants_differ_only_in_flags() {
    let cfg = SpnpbConfig::desk();
    let width = |v: Variant| layer_spec(&cfg, v).unwrap().sizes().to_vec();
    assert_eq!(width(Variant::PbSt)[0], cfg.n_u + cfg.n_p);
    assert_eq!(width(Variant::St)[0], cfg.n_u);
    assert_eq!(width(Variant::Pb)[0], cfg.n_u + cfg.n_p);
    assert_eq!(*width(Variant::PbSt).last().unwrap(), 2 * cfg.n_s());
    assert_eq!(*width(Variant::Pb).last().unwrap(), cfg.n_s());
    assert_eq!(*width(Variant::None).last().unwrap(), cfg.n_s());
    for v in Variant::ALL {
        assert_eq!(&width(v)[1..width(v).len() - 1], &cfg.hidden[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trials_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), prop::collection::vec(-1e-6f64..1e-6, 2)), 1..20), id in 0u32..1000) {
        let records = rows.into_iter().map(|(u, s)| Record { u, s }).collect();
        let trial = TrialDataset::new(id, "E2-B0", records).unwrap();
        let text = trial_to_text(&trial).unwrap();
        let back = trial_from_text(&text, Path::new("t.trial")).unwrap();
        prop_assert_eq!(&back, &trial);
        prop_assert_eq!(trial_to_text(&back).unwrap(), text);
    }

    #[test]
    fn report_aggregates_match_recomputation(distances in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let report = EvalReport {
            variant: "PB+ST".into(),
            regime: "E0-B0".into(),
            entries: distances
                .iter()
                .enumerate()
                .map(|(i, &d)| EvalEntry { object: "mug".into(), template: i % 5, u: vec![0.0; 4], loss: 0.0, initial_loss: 0.0, distance: d })
                .collect(),
        };
        let n = distances.len() as f64;
        let mean = distances.iter().sum::<f64>() / n;
        let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((report.mean() - mean).abs() < 1e-12);
        prop_assert!((report.variance() - var).abs() < 1e-12);
    }
}

#[test]
fn simulator_as_model_points_the_camera_within_tolerance() {
    let scenario = Scenario::basic();
    let cfg = ExperimentConfig::desk().control;
    for label in &scenario.eval_regimes {
        let report = run_eval_sim(&scenario, label, 0, &cfg).unwrap();
        assert_eq!(report.entries.len(), 25);
        assert!(report
            .entries
            .iter()
            .all(|e| e.distance >= 0.0 && e.loss <= e.initial_loss));
        assert!(
            report.mean() < SANITY_MAX_M,
            "{label}: mean {} m",
            report.mean()
        );
        assert_eq!(report, run_eval_sim(&scenario, label, 0, &cfg).unwrap());
    }
}

#[test]
fn single_pair_protocol_has_zero_variance() {
    let scenario = Scenario::basic();
    let world = &scenario.world;
    let state = WorldState {
        noise: 0.0,
        ..WorldState::new(0, 0, 3)
    };
    let cfg = ControlConfig {
        n_init: 100,
        batch: 5,
        ..ControlConfig::desk()
    };
    let entries = eval_with(world, &state, &["clock".to_string()], 1, &cfg, |q| {
        Ok(Box::new(SimObjective::new(world, &state, q, cfg.c_tau)?)
            as Box<dyn spnpb::control::ControlObjective>)
    })
    .unwrap();
    let report = EvalReport {
        variant: "sim".into(),
        regime: "E0-B0".into(),
        entries,
    };
    assert_eq!(report.entries.len(), 1);
    assert_eq!(report.variance(), 0.0);
}

#[test]
fn config_files_override_defaults() {
    let mut cfg = ExperimentConfig::desk();
    cfg.apply(
        "# comment\nseed = 9\nepochs = 12 # trailing\nhidden = 8 8\nn_init = 50\n",
        Path::new("c.cfg"),
    )
    .unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.train.epochs, 12);
    assert_eq!(cfg.train.model.hidden, vec![8, 8]);
    assert_eq!(cfg.control.n_init, 50);
    let err = cfg
        .apply("seed = 1\nbogus = 3\n", Path::new("c.cfg"))
        .unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
}

#[test]
fn scenarios_reparse_and_regimes_are_distinct() {
    for scenario in [Scenario::basic(), Scenario::advanced()] {
        let labels: Vec<&str> = scenario.regimes.iter().map(|r| r.label.as_str()).collect();
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), labels.len());
        assert!(scenario
            .regimes
            .iter()
            .all(|r| r.count >= 1 && r.lighting > 0.0));
        let small = scenario.clone().with_n_v(4).unwrap();
        let a = small
            .collect(&scenario.regimes[0].label, 0, Some(5))
            .unwrap();
        let b = small
            .collect(&scenario.regimes[1].label, 0, Some(5))
            .unwrap();
        assert_ne!(a.records, b.records);
    }
    assert_eq!(Scenario::basic().regimes.len(), 6);
    assert_eq!(Scenario::advanced().regimes.len(), 8);
}
