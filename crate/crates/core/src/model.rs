//! The stochastic predictive network with parametric bias.
//!
//! The network maps a normalized control input `u`, optionally concatenated
//! with a parametric bias `p`, to a per-dimension Gaussian over the
//! normalized sensor state: the first `n_s` outputs are means, the last
//! `n_s` are log-variances. Variances are `exp(y)` with `y` clamped to
//! `[LOG_VARIANCE_MIN, LOG_VARIANCE_MAX]` = `[-5, 20]`. The floor keeps
//! noise-free sensor channels (the torque is an exact function of the
//! posture) from collapsing their variance and drowning out the others.
//!
//! Training minimizes the Gaussian negative log-likelihood
//!
//! ```text
//! L = sum_n sum_i [ 1/2 log(2 pi var_i) + (mean_i - s_i)^2 / (2 var_i) ]
//! ```
//!
//! computed in normalized sensor units. The ablation variants swap the
//! likelihood for a mean squared error (no variance head) and/or drop the
//! bias input; all four share this type.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use crate::error::{check_finite, check_len, Error, Result};
use crate::net::{LayerSpec, Mlp};

/// Lower bound on the log-variance output before exponentiation.
pub const LOG_VARIANCE_MIN: f64 = -5.0;
/// Upper bound on the log-variance output before exponentiation.
pub const LOG_VARIANCE_MAX: f64 = 20.0;

/// Floor applied to normalization standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

pub type TrialId = u32;

/// Low-dimensional regime code, one per training trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricBias(Vec<f64>);

impl ParametricBias {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n_p: usize) -> Self {
        Self(vec![0.0; n_p])
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for ParametricBias {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParametricBias {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub type PbTable = BTreeMap<TrialId, ParametricBias>;

/// Dimensions of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpnpbConfig {
    pub n_u: usize,
    pub n_p: usize,
    pub n_v: usize,
    pub n_tau: usize,
    pub hidden: Vec<usize>,
}

impl SpnpbConfig {
    /// 4 joints, 2-D bias, 512-D embedding, 4 torques, hidden {100, 300, 500}.
    pub fn paper() -> Self {
        Self {
            n_u: 4,
            n_p: 2,
            n_v: 512,
            n_tau: 4,
            hidden: vec![100, 300, 500],
        }
    }

    /// Same layout with a 32-D embedding and narrower hidden layers.
    pub fn desk() -> Self {
        Self {
            n_v: 32,
            hidden: vec![32, 64, 64],
            ..Self::paper()
        }
    }

    pub fn n_s(&self) -> usize {
        self.n_v + self.n_tau
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_v == 0 || self.n_tau == 0 {
            return Err(Error::InvalidConfig(format!(
                "n_u, n_v and n_tau must be >= 1 (got {}, {}, {})",
                self.n_u, self.n_v, self.n_tau
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden widths must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    GaussianNll,
    MeanSquared,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::GaussianNll => "gaussian-nll",
            LossMode::MeanSquared => "mean-squared-error",
        }
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-nll" => Ok(LossMode::GaussianNll),
            "mean-squared-error" => Ok(LossMode::MeanSquared),
            _ => Err(Error::Unknown {
                kind: "loss mode",
                name: s.into(),
            }),
        }
    }
}

/// The four model variants of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Gaussian likelihood with parametric bias (the full model).
    PbSt,
    /// Gaussian likelihood, no bias input.
    St,
    /// Mean squared error with parametric bias.
    Pb,
    /// Mean squared error, no bias input.
    None,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::PbSt, Variant::St, Variant::Pb, Variant::None];

    pub fn loss_mode(self) -> LossMode {
        match self {
            Variant::PbSt | Variant::St => LossMode::GaussianNll,
            Variant::Pb | Variant::None => LossMode::MeanSquared,
        }
    }

    pub fn pb_enabled(self) -> bool {
        matches!(self, Variant::PbSt | Variant::Pb)
    }

    pub fn from_flags(loss_mode: LossMode, pb_enabled: bool) -> Self {
        match (loss_mode, pb_enabled) {
            (LossMode::GaussianNll, true) => Variant::PbSt,
            (LossMode::GaussianNll, false) => Variant::St,
            (LossMode::MeanSquared, true) => Variant::Pb,
            (LossMode::MeanSquared, false) => Variant::None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::PbSt => "PB+ST",
            Variant::St => "ST",
            Variant::Pb => "PB",
            Variant::None => "None",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pb+st" | "pbst" => Ok(Variant::PbSt),
            "st" => Ok(Variant::St),
            "pb" => Ok(Variant::Pb),
            "none" => Ok(Variant::None),
            _ => Err(Error::Unknown {
                kind: "variant",
                name: s.into(),
            }),
        }
    }
}

/// Per-dimension mean and (population) standard deviation of `u` and `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub u_mean: Vec<f64>,
    pub u_std: Vec<f64>,
    pub s_mean: Vec<f64>,
    pub s_std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(n_u: usize, n_s: usize) -> Self {
        Self {
            u_mean: vec![0.0; n_u],
            u_std: vec![1.0; n_u],
            s_mean: vec![0.0; n_s],
            s_std: vec![1.0; n_s],
        }
    }

    /// Two-pass mean/std over every `(u, s)` record.
    pub fn fit<'a, I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
        I::IntoIter: Clone,
    {
        let records = records.into_iter();
        let (u_mean, u_count) = mean_of(records.clone().map(|(u, _)| u), "control input")?;
        let (s_mean, _) = mean_of(records.clone().map(|(_, s)| s), "sensor state")?;
        if u_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "normalization needs at least 2 records, got {u_count}"
            )));
        }
        let u_std = std_of(records.clone().map(|(u, _)| u), &u_mean, u_count);
        let s_std = std_of(records.map(|(_, s)| s), &s_mean, u_count);
        Ok(Self {
            u_mean,
            u_std,
            s_mean,
            s_std,
        })
    }

    pub fn n_u(&self) -> usize {
        self.u_mean.len()
    }

    pub fn n_s(&self) -> usize {
        self.s_mean.len()
    }

    pub fn normalize_u(&self, u: &[f64]) -> Vec<f64> {
        normalize(u, &self.u_mean, &self.u_std)
    }

    pub fn denormalize_u(&self, u: &[f64]) -> Vec<f64> {
        denormalize(u, &self.u_mean, &self.u_std)
    }

    pub fn normalize_s(&self, s: &[f64]) -> Vec<f64> {
        normalize(s, &self.s_mean, &self.s_std)
    }

    pub fn denormalize_s(&self, s: &[f64]) -> Vec<f64> {
        denormalize(s, &self.s_mean, &self.s_std)
    }
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>, what: &str) -> Result<(Vec<f64>, usize)> {
    let mut sum: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for row in rows {
        let acc = sum.get_or_insert_with(|| vec![0.0; row.len()]);
        check_len(what, acc.len(), row.len())?;
        check_finite(what, row)?;
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
        count += 1;
    }
    let mut sum = sum.ok_or(Error::Empty("dataset"))?;
    sum.iter_mut().for_each(|a| *a /= count as f64);
    Ok((sum, count))
}

fn std_of<'a>(rows: impl Iterator<Item = &'a [f64]>, mean: &[f64], count: usize) -> Vec<f64> {
    let mut acc = vec![0.0; mean.len()];
    for row in rows {
        for ((a, x), m) in acc.iter_mut().zip(row).zip(mean) {
            *a += (x - m) * (x - m);
        }
    }
    acc.into_iter()
        .map(|ss| (ss / count as f64).sqrt().max(STD_FLOOR))
        .collect()
}

fn normalize(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| (x - m) / s)
        .collect()
}

fn denormalize(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| x * s + m)
        .collect()
}

/// Predicted sensor distribution for one control input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Mean in raw sensor units.
    pub mean: Vec<f64>,
    /// Variance in raw sensor units.
    pub variance: Vec<f64>,
    pub mean_normalized: Vec<f64>,
    pub variance_normalized: Vec<f64>,
}

/// One training record tagged with its trial.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub u: &'a [f64],
    pub s: &'a [f64],
    pub trial: TrialId,
}

/// A loss value with gradients for the network parameters and every bias in
/// the table that was passed in.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub net: Vec<f64>,
    pub pb: BTreeMap<TrialId, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpnpbModel {
    config: SpnpbConfig,
    variant: Variant,
    net: Mlp,
    norm: NormalizationStats,
    pub pb_table: PbTable,
}

impl SpnpbModel {
    /// Glorot-initialized network with an empty bias table.
    pub fn new(
        config: SpnpbConfig,
        variant: Variant,
        norm: NormalizationStats,
        seed: u64,
    ) -> Result<Self> {
        let spec = layer_spec(&config, variant)?;
        Self::from_parts(
            config,
            variant,
            Mlp::glorot(spec, seed),
            norm,
            PbTable::new(),
        )
    }

    pub fn from_parts(
        config: SpnpbConfig,
        variant: Variant,
        net: Mlp,
        norm: NormalizationStats,
        pb_table: PbTable,
    ) -> Result<Self> {
        let spec = layer_spec(&config, variant)?;
        if net.spec() != &spec {
            return Err(Error::InvalidConfig(format!(
                "network widths {:?} do not match the model layout {:?}",
                net.spec().sizes(),
                spec.sizes()
            )));
        }
        check_len("normalization u", config.n_u, norm.n_u())?;
        check_len("normalization s", config.n_s(), norm.n_s())?;
        for (&id, p) in &pb_table {
            if p.len() != config.n_p {
                return Err(Error::DimensionMismatch {
                    what: format!("parametric bias of trial {id}"),
                    expected: config.n_p,
                    got: p.len(),
                });
            }
        }
        Ok(Self {
            config,
            variant,
            net,
            norm,
            pb_table,
        })
    }

    pub fn config(&self) -> &SpnpbConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn loss_mode(&self) -> LossMode {
        self.variant.loss_mode()
    }

    pub fn pb_enabled(&self) -> bool {
        self.variant.pb_enabled()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn normalization(&self) -> &NormalizationStats {
        &self.norm
    }

    pub fn n_s(&self) -> usize {
        self.config.n_s()
    }

    pub fn input_width(&self) -> usize {
        self.net.spec().input_width()
    }

    /// Width of the bias segment of the network input.
    pub fn pb_width(&self) -> usize {
        if self.pb_enabled() {
            self.config.n_p
        } else {
            0
        }
    }

    /// Writes `[normalize(u), p]` (or just `normalize(u)`) into `out`.
    pub fn write_input(&self, u: &[f64], p: &[f64], out: &mut Vec<f64>) -> Result<()> {
        check_len("control input", self.config.n_u, u.len())?;
        check_finite("control input", u)?;
        out.extend(
            u.iter()
                .zip(&self.norm.u_mean)
                .zip(&self.norm.u_std)
                .map(|((x, m), s)| (x - m) / s),
        );
        if self.pb_enabled() {
            check_len("parametric bias", self.config.n_p, p.len())?;
            check_finite("parametric bias", p)?;
            out.extend_from_slice(p);
        }
        Ok(())
    }

    pub fn predict(&self, u: &[f64], p: &[f64]) -> Result<Prediction> {
        let mut x = Vec::with_capacity(self.input_width());
        self.write_input(u, p, &mut x)?;
        let (y, _) = self.net.forward(&x)?;
        let n_s = self.n_s();
        let mean_normalized = y[..n_s].to_vec();
        let variance_normalized: Vec<f64> = match self.loss_mode() {
            LossMode::GaussianNll => y[n_s..].iter().map(|&l| clamped_exp(l)).collect(),
            LossMode::MeanSquared => vec![1.0; n_s],
        };
        let mean = self.norm.denormalize_s(&mean_normalized);
        let variance = match self.loss_mode() {
            LossMode::GaussianNll => variance_normalized
                .iter()
                .zip(&self.norm.s_std)
                .map(|(v, s)| v * s * s)
                .collect(),
            LossMode::MeanSquared => vec![1.0; n_s],
        };
        Ok(Prediction {
            mean,
            variance,
            mean_normalized,
            variance_normalized,
        })
    }

    /// Gaussian negative log-likelihood of a batch, summed over records and
    /// sensor dimensions, with exact gradients.
    pub fn nll_loss(&self, batch: &[Sample<'_>], pbs: &PbTable) -> Result<LossGrad> {
        if self.loss_mode() != LossMode::GaussianNll {
            return Err(Error::InvalidConfig(format!(
                "nll_loss called on a {} model",
                self.variant
            )));
        }
        self.batch_loss(batch, pbs)
    }

    /// Mean of squared normalized residuals over records and dimensions.
    pub fn mse_loss(&self, batch: &[Sample<'_>], pbs: &PbTable) -> Result<LossGrad> {
        if self.loss_mode() != LossMode::MeanSquared {
            return Err(Error::InvalidConfig(format!(
                "mse_loss called on a {} model",
                self.variant
            )));
        }
        self.batch_loss(batch, pbs)
    }

    /// The training loss of this model's variant.
    pub fn loss(&self, batch: &[Sample<'_>], pbs: &PbTable) -> Result<LossGrad> {
        self.batch_loss(batch, pbs)
    }

    fn batch_loss(&self, batch: &[Sample<'_>], pbs: &PbTable) -> Result<LossGrad> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n_s = self.n_s();
        let mut inputs = Vec::with_capacity(batch.len() * self.input_width());
        let mut targets = Vec::with_capacity(batch.len() * n_s);
        let zeros = vec![0.0; self.config.n_p];
        for sample in batch {
            let p = if self.pb_enabled() {
                pbs.get(&sample.trial)
                    .ok_or(Error::MissingBias(sample.trial))?
            } else {
                &zeros[..]
            };
            self.write_input(sample.u, p, &mut inputs)?;
            check_len("sensor state", n_s, sample.s.len())?;
            check_finite("sensor state", sample.s)?;
            targets.extend(self.norm.normalize_s(sample.s));
        }

        let mut net = vec![0.0; self.net.params().len()];
        let (loss, input_grads) =
            self.loss_normalized(&inputs, &targets, batch.len(), Some(&mut net))?;

        let mut pb: BTreeMap<TrialId, Vec<f64>> = pbs
            .keys()
            .map(|&k| (k, vec![0.0; self.config.n_p]))
            .collect();
        if self.pb_enabled() {
            let width = self.input_width();
            let n_u = self.config.n_u;
            for (sample, row) in batch.iter().zip(input_grads.chunks_exact(width)) {
                let g = pb.get_mut(&sample.trial).expect("checked above");
                for (gi, ri) in g.iter_mut().zip(&row[n_u..]) {
                    *gi += ri;
                }
            }
        }
        Ok(LossGrad { loss, net, pb })
    }

    /// Loss on already-normalized network inputs and targets.
    ///
    /// Parameter gradients are added into `param_grads`; the returned vector
    /// holds row-major gradients with respect to the network inputs.
    pub fn loss_normalized(
        &self,
        inputs: &[f64],
        targets: &[f64],
        rows: usize,
        param_grads: Option<&mut [f64]>,
    ) -> Result<(f64, Vec<f64>)> {
        let n_s = self.n_s();
        check_len("normalized targets", rows * n_s, targets.len())?;
        let trace = self.net.forward_batch(inputs, rows)?;
        let out = trace.output();
        let width = self.net.spec().output_width();
        let mut out_grad = vec![0.0; out.len()];
        let mut loss = 0.0;
        match self.loss_mode() {
            LossMode::GaussianNll => {
                let half_log_2pi = 0.5 * (2.0 * PI).ln();
                for ((y, g), s) in out
                    .chunks_exact(width)
                    .zip(out_grad.chunks_exact_mut(width))
                    .zip(targets.chunks_exact(n_s))
                {
                    for i in 0..n_s {
                        let raw = y[n_s + i];
                        let log_var = raw.clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX);
                        let var = log_var.exp();
                        assert!(var > 0.0, "variance head produced {var}");
                        let r = y[i] - s[i];
                        let r2 = r * r / var;
                        loss += half_log_2pi + 0.5 * log_var + 0.5 * r2;
                        g[i] = r / var;
                        g[n_s + i] = if (LOG_VARIANCE_MIN..=LOG_VARIANCE_MAX).contains(&raw) {
                            0.5 - 0.5 * r2
                        } else {
                            0.0
                        };
                    }
                }
            }
            LossMode::MeanSquared => {
                let scale = 1.0 / (rows * n_s) as f64;
                for ((y, g), s) in out
                    .chunks_exact(width)
                    .zip(out_grad.chunks_exact_mut(width))
                    .zip(targets.chunks_exact(n_s))
                {
                    for i in 0..n_s {
                        let r = y[i] - s[i];
                        loss += r * r * scale;
                        g[i] = 2.0 * r * scale;
                    }
                }
            }
        }
        let input_grads = self.net.backward_batch(&trace, &out_grad, param_grads)?;
        Ok((loss, input_grads))
    }
}

fn clamped_exp(log_var: f64) -> f64 {
    log_var.clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX).exp()
}

/// Network widths for a configuration and variant.
pub fn layer_spec(config: &SpnpbConfig, variant: Variant) -> Result<LayerSpec> {
    config.validate()?;
    let input = config.n_u + if variant.pb_enabled() { config.n_p } else { 0 };
    let output = match variant.loss_mode() {
        LossMode::GaussianNll => 2 * config.n_s(),
        LossMode::MeanSquared => config.n_s(),
    };
    let mut sizes = vec![input];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(output);
    LayerSpec::new(sizes)
}
