#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spnpb::data::Record;
use spnpb::model::{
    NormalizationStats, ParametricBias, Sample, SpnpbConfig, SpnpbModel, TrialId, Variant,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_config() -> SpnpbConfig {
    SpnpbConfig {
        n_u: 2,
        n_p: 2,
        n_v: 3,
        n_tau: 2,
        hidden: vec![4, 3],
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random weights in ±0.8, random normalization and a two-trial bias table.
pub fn random_model(rng: &mut ChaCha8Rng, cfg: SpnpbConfig, variant: Variant) -> SpnpbModel {
    let n_s = cfg.n_s();
    let norm = NormalizationStats {
        u_mean: uniform(rng, -0.5, 0.5, cfg.n_u),
        u_std: uniform(rng, 0.5, 2.0, cfg.n_u),
        s_mean: uniform(rng, -0.5, 0.5, n_s),
        s_std: uniform(rng, 0.5, 2.0, n_s),
    };
    let n_p = cfg.n_p;
    let mut m = SpnpbModel::new(cfg, variant, norm, rng.random()).unwrap();
    for w in m.net_mut().params_mut() {
        *w = rng.random_range(-0.8..0.8);
    }
    for id in 0..2 {
        m.pb_table
            .insert(id, ParametricBias::new(uniform(rng, -1.0, 1.0, n_p)));
    }
    m
}

pub fn random_records(rng: &mut ChaCha8Rng, cfg: &SpnpbConfig, n: usize) -> Vec<(Record, TrialId)> {
    (0..n)
        .map(|i| {
            let r = Record {
                u: uniform(rng, -1.5, 1.5, cfg.n_u),
                s: uniform(rng, -1.5, 1.5, cfg.n_s()),
            };
            (r, (i % 2) as TrialId)
        })
        .collect()
}

pub fn samples(records: &[(Record, TrialId)]) -> Vec<Sample<'_>> {
    records
        .iter()
        .map(|(r, t)| Sample {
            u: &r.u,
            s: &r.s,
            trial: *t,
        })
        .collect()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / max(|a|, |b|)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn central_difference(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let x0 = x[i];
            x[i] = x0 + h;
            let up = f(x);
            x[i] = x0 - h;
            let down = f(x);
            x[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}
