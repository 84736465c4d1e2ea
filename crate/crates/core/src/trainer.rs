//! Joint training of network weights and per-trial parametric biases, and
//! PCA of the trained bias table.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::data::{Record, TrainingSet, TrialDataset};
use crate::error::{check_len, Error, Result};
use crate::model::{
    NormalizationStats, ParametricBias, PbTable, SpnpbConfig, SpnpbModel, TrialId, Variant,
};
use crate::net::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: SpnpbConfig,
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: SpnpbConfig::desk(),
            variant: Variant::PbSt,
            epochs: 300,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-record training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Bias table after each epoch.
    pub pb_history: Vec<PbTable>,
    pub pb_table: PbTable,
    pub wall_clock: Duration,
}

/// Fits normalization over every trial, then optimizes the network and one
/// bias per trial (each starting at zero) with a single Adam over both.
pub fn train(ts: &TrainingSet, cfg: &TrainConfig) -> Result<(SpnpbModel, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mc = &cfg.model;
    let first = &ts.trials[0];
    check_len("dataset control input", mc.n_u, first.n_u())?;
    check_len("dataset sensor state", mc.n_s(), first.n_s())?;

    let norm = NormalizationStats::fit(ts.records())?;
    let mut model = SpnpbModel::new(mc.clone(), cfg.variant, norm, cfg.seed)?;
    let ids: Vec<TrialId> = ts.trials.iter().map(|t| t.id).collect();
    let n_p = mc.n_p;

    // normalized inputs (bias columns filled per batch) and targets
    let n_u = mc.n_u;
    let n_s = mc.n_s();
    let mut us = Vec::with_capacity(ts.record_count() * n_u);
    let mut ss = Vec::with_capacity(ts.record_count() * n_s);
    let mut owner = Vec::with_capacity(ts.record_count());
    for (slot, t) in ts.trials.iter().enumerate() {
        for r in &t.records {
            us.extend(model.normalization().normalize_u(&r.u));
            ss.extend(model.normalization().normalize_s(&r.s));
            owner.push(slot);
        }
    }
    let total = owner.len();

    let n_net = model.net().params().len();
    let pb_width = model.pb_width();
    // joint parameter vector: [network, p_1, ..., p_K]
    let mut params: Vec<f64> = model.net().params().to_vec();
    params.resize(n_net + ids.len() * n_p, 0.0);
    let mut adam = Adam::new(cfg.adam, params.len());
    let mut grads = vec![0.0; params.len()];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_7EA1);
    let mut order: Vec<usize> = (0..total).collect();
    let width = model.input_width();
    let mut report = TrainReport {
        epoch_loss: Vec::with_capacity(cfg.epochs),
        pb_history: Vec::with_capacity(cfg.epochs),
        pb_table: PbTable::new(),
        wall_clock: Duration::ZERO,
    };
    let mut inputs = Vec::with_capacity(cfg.batch_size * width);
    let mut targets = Vec::with_capacity(cfg.batch_size * n_s);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            inputs.clear();
            targets.clear();
            for &i in batch {
                inputs.extend_from_slice(&us[i * n_u..(i + 1) * n_u]);
                let off = n_net + owner[i] * n_p;
                inputs.extend_from_slice(&params[off..off + pb_width]);
                targets.extend_from_slice(&ss[i * n_s..(i + 1) * n_s]);
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            let (loss, input_grads) =
                model.loss_normalized(&inputs, &targets, batch.len(), Some(&mut grads[..n_net]))?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    rate: cfg.adam.rate,
                });
            }
            epoch_loss += loss;
            if pb_width > 0 {
                for (&i, row) in batch.iter().zip(input_grads.chunks_exact(width)) {
                    let off = n_net + owner[i] * n_p;
                    for (g, r) in grads[off..off + n_p].iter_mut().zip(&row[n_u..]) {
                        *g += r;
                    }
                }
            }
            adam.step(&mut params, &grads)?;
            model
                .net_mut()
                .params_mut()
                .copy_from_slice(&params[..n_net]);
        }
        let per_record = match cfg.variant.loss_mode() {
            // sums over records; report the per-record mean
            crate::model::LossMode::GaussianNll => epoch_loss / total as f64,
            // batch means; report the mean over batches
            crate::model::LossMode::MeanSquared => {
                epoch_loss / order.chunks(cfg.batch_size).count() as f64
            }
        };
        if !per_record.is_finite() {
            return Err(Error::Diverged {
                epoch,
                rate: cfg.adam.rate,
            });
        }
        report.epoch_loss.push(per_record);
        report
            .pb_history
            .push(pb_table_from(&params[n_net..], &ids, n_p));
    }

    model.pb_table = pb_table_from(&params[n_net..], &ids, n_p);
    report.pb_table = model.pb_table.clone();
    report.wall_clock = start.elapsed();
    Ok((model, report))
}

fn pb_table_from(flat: &[f64], ids: &[TrialId], n_p: usize) -> PbTable {
    ids.iter()
        .enumerate()
        .map(|(k, &id)| {
            (
                id,
                ParametricBias::new(flat[k * n_p..(k + 1) * n_p].to_vec()),
            )
        })
        .collect()
}

/// Mean per-record loss of `trial` under bias `p` (the model's own loss
/// mode: Gaussian NLL, or squared error for the MSE variants).
pub fn evaluate_nll(model: &SpnpbModel, trial: &TrialDataset, p: &ParametricBias) -> Result<f64> {
    if trial.is_empty() {
        return Err(Error::Empty("trial"));
    }
    let mut pbs = PbTable::new();
    pbs.insert(trial.id, p.clone());
    let samples: Vec<_> = trial.samples().collect();
    let lg = model.loss(&samples, &pbs)?;
    Ok(match model.loss_mode() {
        crate::model::LossMode::GaussianNll => lg.loss / trial.len() as f64,
        crate::model::LossMode::MeanSquared => lg.loss * model.n_s() as f64,
    })
}

/// Trial whose trained bias explains `chunk` best (lowest [`evaluate_nll`]).
pub fn classify(model: &SpnpbModel, chunk: &TrialDataset) -> Result<TrialId> {
    let mut best: Option<(f64, TrialId)> = None;
    for (&id, p) in &model.pb_table {
        let l = evaluate_nll(model, chunk, p)?;
        if best.is_none_or(|(b, _)| l < b) {
            best = Some((l, id));
        }
    }
    best.map(|(_, id)| id)
        .ok_or(Error::Empty("parametric bias table"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaPoint {
    pub trial: TrialId,
    pub coords: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub points: Vec<PcaPoint>,
    /// Fraction of total variance along each of the two axes.
    pub explained: [f64; 2],
    /// Principal axes (unit vectors in bias space).
    pub axes: [Vec<f64>; 2],
}

/// Projects the mean-centred biases onto the top two eigenvectors of their
/// covariance. Each axis is signed so that its largest-magnitude component
/// is positive.
pub fn pca_project(pbs: &PbTable) -> Result<PcaProjection> {
    if pbs.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "PCA needs at least 2 biases, got {}",
            pbs.len()
        )));
    }
    let dim = pbs.values().next().unwrap().len();
    if dim == 0 {
        return Err(Error::Empty("parametric bias"));
    }
    for p in pbs.values() {
        check_len("parametric bias", dim, p.len())?;
    }
    let n = pbs.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in pbs.values() {
        for (m, x) in mean.iter_mut().zip(p.iter()) {
            *m += x / n;
        }
    }
    let centred: Vec<Vec<f64>> = pbs
        .values()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let cov = DMatrix::from_fn(dim, dim, |i, j| {
        centred.iter().map(|c| c[i] * c[j]).sum::<f64>() / n
    });
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut axes: [Vec<f64>; 2] = [vec![0.0; dim], vec![0.0; dim]];
    let mut explained = [0.0; 2];
    for (slot, &k) in order.iter().take(2).enumerate() {
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = axis
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, v)| v)
            .unwrap_or(1.0);
        if lead < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        explained[slot] = if total > 0.0 {
            eig.eigenvalues[k].max(0.0) / total
        } else {
            0.0
        };
        axes[slot] = axis;
    }

    let points = pbs
        .keys()
        .zip(&centred)
        .map(|(&trial, c)| {
            let proj = |a: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
            PcaPoint {
                trial,
                coords: [proj(&axes[0]), proj(&axes[1])],
            }
        })
        .collect();
    Ok(PcaProjection {
        points,
        explained,
        axes,
    })
}
