//! Online parametric-bias adaptation with frozen network weights.
//!
//! Observations stream into a bounded FIFO. Once it holds at least
//! `threshold` records, every [`PbUpdater::maybe_update`] call runs
//! `epochs` full-buffer momentum-SGD steps on the bias alone. The momentum
//! velocity persists across calls.
//!
//! The objective is the model's loss averaged over records and sensor
//! dimensions, so one learning rate serves any embedding width.

use std::collections::VecDeque;

use crate::data::Record;
use crate::error::{check_len, Error, Result};
use crate::model::{LossMode, ParametricBias, PbTable, Sample, SpnpbModel};
use crate::net::{MomentumConfig, MomentumSgd};

#[derive(Debug, Clone, PartialEq)]
pub struct UpdaterConfig {
    /// Minimum buffered records before updates start.
    pub threshold: usize,
    /// Buffer capacity; older records are evicted first.
    pub capacity: usize,
    /// Gradient steps per update call.
    pub epochs: usize,
    pub momentum: MomentumConfig,
}

impl Default for UpdaterConfig {
    fn default() -> Self {
        Self {
            threshold: 100,
            capacity: 200,
            epochs: 3,
            momentum: MomentumConfig::default(),
        }
    }
}

impl UpdaterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold == 0 || self.threshold > self.capacity || self.epochs == 0 {
            return Err(Error::InvalidConfig(format!(
                "updater needs 0 < threshold <= capacity and epochs >= 1 (got {}, {}, {})",
                self.threshold, self.capacity, self.epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateBuffer {
    capacity: usize,
    records: VecDeque<Record>,
}

impl UpdateBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            records: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn push(&mut self, record: Record) {
        self.records.push_back(record);
        while self.records.len() > self.capacity {
            self.records.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }
}

/// Loss per sensor element (mean over records and dimensions) of `records`
/// under bias `p`, and its gradient with respect to `p`.
pub fn bias_loss_and_gradient<'a>(
    model: &SpnpbModel,
    records: impl IntoIterator<Item = &'a Record>,
    p: &ParametricBias,
) -> Result<(f64, Vec<f64>)> {
    let samples: Vec<Sample<'_>> = records
        .into_iter()
        .map(|r| Sample {
            u: &r.u,
            s: &r.s,
            trial: 0,
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Empty("update buffer"));
    }
    let mut pbs = PbTable::new();
    pbs.insert(0, p.clone());
    let lg = model.loss(&samples, &pbs)?;
    // the NLL is a sum over records and dimensions, the MSE already a mean
    let scale = match model.loss_mode() {
        LossMode::GaussianNll => 1.0 / (samples.len() * model.n_s()) as f64,
        LossMode::MeanSquared => 1.0,
    };
    let grad = lg.pb[&0].iter().map(|g| g * scale).collect();
    Ok((lg.loss * scale, grad))
}

#[derive(Debug, Clone)]
pub struct PbUpdater {
    pub config: UpdaterConfig,
    buffer: UpdateBuffer,
    p: ParametricBias,
    optimizer: MomentumSgd,
}

impl PbUpdater {
    /// Starts from `p = 0`.
    pub fn new(config: UpdaterConfig, n_p: usize) -> Result<Self> {
        Self::with_bias(config, ParametricBias::zeros(n_p))
    }

    pub fn with_bias(config: UpdaterConfig, p: ParametricBias) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            buffer: UpdateBuffer::new(config.capacity),
            optimizer: MomentumSgd::new(config.momentum, p.len()),
            p,
            config,
        })
    }

    pub fn bias(&self) -> &ParametricBias {
        &self.p
    }

    pub fn buffer(&self) -> &UpdateBuffer {
        &self.buffer
    }

    pub fn push(&mut self, record: Record) {
        self.buffer.push(record);
    }

    /// Runs one update round if the buffer has reached the threshold.
    /// Returns the bias after each step (empty when below threshold).
    pub fn maybe_update(&mut self, model: &SpnpbModel) -> Result<Vec<ParametricBias>> {
        if !model.pb_enabled() {
            return Err(Error::InvalidConfig(format!(
                "the {} variant has no parametric bias to update",
                model.variant()
            )));
        }
        check_len("parametric bias", model.config().n_p, self.p.len())?;
        if self.buffer.len() < self.config.threshold {
            return Ok(Vec::new());
        }
        let mut trajectory = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let (_, grad) = bias_loss_and_gradient(model, self.buffer.iter(), &self.p)?;
            self.optimizer.step(self.p.as_mut_slice(), &grad)?;
            trajectory.push(self.p.clone());
        }
        Ok(trajectory)
    }

    /// Pushes one observation and runs [`PbUpdater::maybe_update`].
    pub fn observe(&mut self, model: &SpnpbModel, record: Record) -> Result<Vec<ParametricBias>> {
        self.push(record);
        self.maybe_update(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{layer_spec, NormalizationStats, SpnpbConfig, Variant};
    use crate::net::Mlp;

    fn rec(i: usize) -> Record {
        Record {
            u: vec![i as f64],
            s: vec![0.0, 0.0],
        }
    }

    fn model() -> SpnpbModel {
        let cfg = SpnpbConfig {
            n_u: 1,
            n_p: 2,
            n_v: 1,
            n_tau: 1,
            hidden: vec![3],
        };
        SpnpbModel::new(cfg, Variant::PbSt, NormalizationStats::identity(1, 2), 2).unwrap()
    }

    #[test]
    fn fifo_evicts_oldest() {
        let mut buf = UpdateBuffer::new(200);
        buf.push(rec(1));
        assert_eq!(buf.len(), 1);
        for i in 2..=201 {
            buf.push(rec(i));
        }
        let us: Vec<f64> = buf.iter().map(|r| r.u[0]).collect();
        assert_eq!(us, (2..=201).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn below_threshold_nothing_moves() {
        let m = model();
        let mut up = PbUpdater::new(UpdaterConfig::default(), 2).unwrap();
        for i in 0..99 {
            assert!(up.observe(&m, rec(i)).unwrap().is_empty());
        }
        assert_eq!(up.bias(), &ParametricBias::zeros(2));
        let traj = up.observe(&m, rec(99)).unwrap();
        assert_eq!(traj.len(), 3);
    }

    #[test]
    fn fixed_point_is_kept() {
        // zero network: the bias does not influence the loss at all
        let cfg = SpnpbConfig {
            n_u: 1,
            n_p: 2,
            n_v: 1,
            n_tau: 1,
            hidden: vec![3],
        };
        let net = Mlp::zeros(layer_spec(&cfg, Variant::PbSt).unwrap());
        let m = SpnpbModel::from_parts(
            cfg,
            Variant::PbSt,
            net,
            NormalizationStats::identity(1, 2),
            PbTable::new(),
        )
        .unwrap();
        let start = ParametricBias::new(vec![0.4, -1.2]);
        let mut up = PbUpdater::with_bias(
            UpdaterConfig {
                threshold: 1,
                ..UpdaterConfig::default()
            },
            start.clone(),
        )
        .unwrap();
        for i in 0..10 {
            up.observe(&m, rec(i)).unwrap();
        }
        assert_eq!(up.bias(), &start);
    }

    #[test]
    fn weights_are_untouched_and_disabled_models_rejected() {
        let m = model();
        let before = m.net().params().to_vec();
        let mut up = PbUpdater::new(
            UpdaterConfig {
                threshold: 5,
                ..UpdaterConfig::default()
            },
            2,
        )
        .unwrap();
        for i in 0..20 {
            up.observe(&m, rec(i)).unwrap();
        }
        assert_eq!(m.net().params(), before.as_slice());

        let st = SpnpbModel::new(
            m.config().clone(),
            Variant::St,
            NormalizationStats::identity(1, 2),
            0,
        )
        .unwrap();
        assert!(up.maybe_update(&st).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = UpdaterConfig {
            threshold: 300,
            ..UpdaterConfig::default()
        };
        assert!(PbUpdater::new(bad, 2).is_err());
    }
}
