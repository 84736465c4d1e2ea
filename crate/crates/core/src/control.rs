//! View control by inverting the predictive model.
//!
//! The control loss of a joint command `u` is
//!
//! ```text
//! L(u) = -q . v(u) + c_tau * |tau(u)|_2
//! ```
//!
//! where `v` and `tau` are the predicted mean embedding and torques in raw
//! units and `q` is the query embedding. [`optimize`] samples many random
//! commands, keeps the best `batch` of them, and then, for a few rounds,
//! moves every kept candidate along its negative gradient with `batch`
//! log-spaced step sizes, keeping whichever variant scores lowest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::model::SpnpbModel;
use crate::sim::{JointLimits, Query};

/// Rows evaluated per network call when scoring the initial samples.
const EVAL_CHUNK: usize = 4096;

/// Decades spanned by the step-size sweep below `gamma_max`.
const STEP_DECADES: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub n_init: usize,
    pub batch: usize,
    pub epochs: usize,
    pub gamma_max: f64,
    pub c_tau: f64,
    pub seed: u64,
    pub limits: JointLimits,
}

impl ControlConfig {
    /// 30000 initial samples, 100 candidates and step sizes, 2 rounds,
    /// `gamma_max = 0.1`, `c_tau = 1e-4`.
    pub fn paper() -> Self {
        Self {
            n_init: 30_000,
            batch: 100,
            epochs: 2,
            gamma_max: 0.1,
            c_tau: 1e-4,
            seed: 0,
            limits: JointLimits::mycobot(),
        }
    }

    pub fn desk() -> Self {
        Self {
            n_init: 2000,
            batch: 50,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.batch == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("control counts must be >= 1".into()));
        }
        if !(self.gamma_max > 0.0) || !(self.c_tau >= 0.0) {
            return Err(Error::InvalidConfig(
                "need gamma_max > 0 and c_tau >= 0".into(),
            ));
        }
        JointLimits::new(self.limits.lo.clone(), self.limits.hi.clone())?;
        Ok(())
    }

    /// `gamma_j = gamma_max * 10^(-3 (1 - j / batch))` for `j = 1..=batch`.
    pub fn step_sizes(&self) -> Vec<f64> {
        let n = self.batch as f64;
        (1..=self.batch)
            .map(|j| self.gamma_max * 10f64.powf(-STEP_DECADES * (1.0 - j as f64 / n)))
            .collect()
    }
}

/// Something whose loss (and gradient) over control inputs can be evaluated
/// in batches.
pub trait ControlObjective {
    fn n_u(&self) -> usize;

    /// Losses of `rows` row-major inputs. When `grads` is given it receives
    /// the row-major gradient of each loss with respect to its input.
    fn evaluate(&self, us: &[f64], rows: usize, grads: Option<&mut [f64]>) -> Result<Vec<f64>>;
}

/// The control loss of a trained model under a fixed bias and query.
#[derive(Debug, Clone)]
pub struct ModelObjective<'a> {
    pub model: &'a SpnpbModel,
    pub p: &'a [f64],
    pub query: &'a Query,
    pub c_tau: f64,
    /// Inputs are clamped into these limits before evaluation.
    pub limits: Option<&'a JointLimits>,
}

impl<'a> ModelObjective<'a> {
    pub fn new(model: &'a SpnpbModel, p: &'a [f64], query: &'a Query, c_tau: f64) -> Result<Self> {
        check_len("query", model.config().n_v, query.q.len())?;
        if model.pb_enabled() {
            check_len("parametric bias", model.config().n_p, p.len())?;
        }
        Ok(Self {
            model,
            p,
            query,
            c_tau,
            limits: None,
        })
    }

    pub fn with_limits(mut self, limits: &'a JointLimits) -> Self {
        self.limits = Some(limits);
        self
    }
}

impl ControlObjective for ModelObjective<'_> {
    fn n_u(&self) -> usize {
        self.model.config().n_u
    }

    fn evaluate(&self, us: &[f64], rows: usize, grads: Option<&mut [f64]>) -> Result<Vec<f64>> {
        let model = self.model;
        let cfg = model.config();
        let (n_u, n_v, n_s) = (cfg.n_u, cfg.n_v, cfg.n_s());
        check_len("control inputs", rows * n_u, us.len())?;
        let mut inputs = Vec::with_capacity(rows * model.input_width());
        let mut u = vec![0.0; n_u];
        for row in us.chunks_exact(n_u) {
            u.copy_from_slice(row);
            if let Some(lim) = self.limits {
                lim.clamp(&mut u);
            }
            model.write_input(&u, self.p, &mut inputs)?;
        }
        let trace = model.net().forward_batch(&inputs, rows)?;
        let norm = model.normalization();
        let width = model.net().spec().output_width();
        let mut losses = Vec::with_capacity(rows);
        let mut out_grad = vec![0.0; rows * width];
        for (y, g) in trace
            .output()
            .chunks_exact(width)
            .zip(out_grad.chunks_exact_mut(width))
        {
            let raw: Vec<f64> = (0..n_s)
                .map(|i| y[i] * norm.s_std[i] + norm.s_mean[i])
                .collect();
            let dot: f64 = raw[..n_v]
                .iter()
                .zip(&self.query.q)
                .map(|(a, b)| a * b)
                .sum();
            let tau_norm = raw[n_v..].iter().map(|t| t * t).sum::<f64>().sqrt();
            losses.push(-dot + self.c_tau * tau_norm);
            for i in 0..n_v {
                g[i] = -self.query.q[i] * norm.s_std[i];
            }
            // subgradient 0 at tau = 0
            if tau_norm > 0.0 {
                for i in n_v..n_s {
                    g[i] = self.c_tau * raw[i] / tau_norm * norm.s_std[i];
                }
            }
        }
        if let Some(grads) = grads {
            check_len("control gradient buffer", rows * n_u, grads.len())?;
            let input_grads = model.net().backward_batch(&trace, &out_grad, None)?;
            let in_width = model.input_width();
            for (dst, src) in grads
                .chunks_exact_mut(n_u)
                .zip(input_grads.chunks_exact(in_width))
            {
                for j in 0..n_u {
                    dst[j] = src[j] / norm.u_std[j];
                }
            }
        }
        Ok(losses)
    }
}

/// Control loss and its gradient with respect to `u` for one command.
pub fn control_loss(
    model: &SpnpbModel,
    u: &[f64],
    p: &[f64],
    query: &Query,
    c_tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let obj = ModelObjective::new(model, p, query, c_tau)?;
    let mut grad = vec![0.0; u.len()];
    let loss = obj.evaluate(u, 1, Some(&mut grad))?;
    Ok((loss[0], grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlResult {
    pub u: Vec<f64>,
    pub loss: f64,
    /// Lowest loss among the random initial samples.
    pub initial_best_loss: f64,
    /// Best loss after each refinement round.
    pub epoch_best: Vec<f64>,
    pub n_init: usize,
    pub batch: usize,
    pub epochs: usize,
    pub gamma_max: f64,
    pub c_tau: f64,
}

pub fn optimize(objective: &dyn ControlObjective, cfg: &ControlConfig) -> Result<ControlResult> {
    cfg.validate()?;
    let n_u = cfg.limits.len();
    check_len("objective control dimension", n_u, objective.n_u())?;
    let lim = &cfg.limits;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = Vec::with_capacity(cfg.n_init * n_u);
    for _ in 0..cfg.n_init {
        for j in 0..n_u {
            init.push(uniform(&mut rng, lim.lo[j], lim.hi[j]));
        }
    }
    let mut init_loss = Vec::with_capacity(cfg.n_init);
    for chunk in init.chunks(EVAL_CHUNK * n_u) {
        init_loss.extend(objective.evaluate(chunk, chunk.len() / n_u, None)?);
    }

    let mut order: Vec<usize> = (0..cfg.n_init).collect();
    order.sort_by(|&a, &b| init_loss[a].total_cmp(&init_loss[b]).then(a.cmp(&b)));
    let keep = cfg.batch.min(cfg.n_init);
    let mut cand: Vec<f64> = order[..keep]
        .iter()
        .flat_map(|&i| init[i * n_u..(i + 1) * n_u].iter().copied())
        .collect();
    let mut cand_loss: Vec<f64> = order[..keep].iter().map(|&i| init_loss[i]).collect();
    let initial_best_loss = cand_loss[0];

    let steps = cfg.step_sizes();
    let mut grads = vec![0.0; keep * n_u];
    let mut variants = Vec::with_capacity(keep * steps.len() * n_u);
    let mut epoch_best = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        objective.evaluate(&cand, keep, Some(&mut grads))?;
        variants.clear();
        for c in 0..keep {
            let u = &cand[c * n_u..(c + 1) * n_u];
            let g = &grads[c * n_u..(c + 1) * n_u];
            for &gamma in &steps {
                let start = variants.len();
                variants.extend(u.iter().zip(g).map(|(x, d)| x - gamma * d));
                lim.clamp(&mut variants[start..]);
            }
        }
        let var_loss = objective.evaluate(&variants, keep * steps.len(), None)?;
        for c in 0..keep {
            let block = &var_loss[c * steps.len()..(c + 1) * steps.len()];
            let (j, &l) = block
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .expect("at least one step size");
            if l < cand_loss[c] {
                cand_loss[c] = l;
                let src = (c * steps.len() + j) * n_u;
                cand[c * n_u..(c + 1) * n_u].copy_from_slice(&variants[src..src + n_u]);
            }
        }
        epoch_best.push(cand_loss.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let best = (0..keep)
        .min_by(|&a, &b| cand_loss[a].total_cmp(&cand_loss[b]).then(a.cmp(&b)))
        .expect("at least one candidate");
    Ok(ControlResult {
        u: cand[best * n_u..(best + 1) * n_u].to_vec(),
        loss: cand_loss[best],
        initial_best_loss,
        epoch_best,
        n_init: cfg.n_init,
        batch: cfg.batch,
        epochs: cfg.epochs,
        gamma_max: cfg.gamma_max,
        c_tau: cfg.c_tau,
    })
}

fn uniform(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_sizes_span_three_decades() {
        let cfg = ControlConfig::paper();
        let s = cfg.step_sizes();
        assert_eq!(s.len(), 100);
        assert!((s[99] - 0.1).abs() < 1e-15);
        assert!((s[0] - 0.1 * 10f64.powf(-3.0 * 0.99)).abs() < 1e-15);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn paper_values() {
        let cfg = ControlConfig::paper();
        assert_eq!((cfg.n_init, cfg.batch, cfg.epochs), (30_000, 100, 2));
        assert_eq!((cfg.gamma_max, cfg.c_tau), (0.1, 1e-4));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ControlConfig::desk();
        cfg.batch = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ControlConfig::desk();
        cfg.limits = JointLimits {
            lo: vec![1.0],
            hi: vec![0.0],
        };
        assert!(cfg.validate().is_err());
    }

    /// `(u - 0.3)^2` on one joint.
    struct Parabola;

    impl ControlObjective for Parabola {
        fn n_u(&self) -> usize {
            1
        }

        fn evaluate(
            &self,
            us: &[f64],
            _rows: usize,
            grads: Option<&mut [f64]>,
        ) -> Result<Vec<f64>> {
            if let Some(g) = grads {
                for (g, u) in g.iter_mut().zip(us) {
                    *g = 2.0 * (u - 0.3);
                }
            }
            Ok(us.iter().map(|u| (u - 0.3) * (u - 0.3)).collect())
        }
    }

    #[test]
    fn refinement_never_worsens_and_stays_in_bounds() {
        let cfg = ControlConfig {
            n_init: 50,
            batch: 10,
            epochs: 3,
            gamma_max: 0.5,
            c_tau: 0.0,
            seed: 4,
            limits: JointLimits::new(vec![-1.0], vec![1.0]).unwrap(),
        };
        let r = optimize(&Parabola, &cfg).unwrap();
        assert!(r.loss <= r.initial_best_loss);
        assert!(r.epoch_best.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.u[0] >= -1.0 && r.u[0] <= 1.0);
        assert!((r.u[0] - 0.3).abs() < 1e-3);
        assert_eq!(r, optimize(&Parabola, &cfg).unwrap());
    }
}
