//! View-control evaluation, the ablation grid and online bias probes.

use crate::control::{optimize, ControlConfig, ControlObjective, ModelObjective};
use crate::data::TrainingSet;
use crate::error::{check_len, Error, Result};
use crate::model::{ParametricBias, PbTable, SpnpbModel, TrialId, Variant};
use crate::sim::{
    forward_kinematics, gravity_torque, mix, query_embedding, render_embedding, Query, World,
    WorldState,
};
use crate::trainer::{train, TrainConfig, TrainReport};
use crate::updater::{PbUpdater, UpdaterConfig};

use super::formats::Checkpoint;
use super::scenario::Scenario;

/// Finite-difference step (rad) of [`SimObjective`].
const SIM_FD_STEP: f64 = 1e-6;

/// The control loss evaluated on the simulator itself: the embedding the
/// camera would actually see (without noise) and the true gravity torques.
/// Gradients are central differences, one-sided at joint limits.
#[derive(Debug, Clone)]
pub struct SimObjective<'a> {
    pub world: &'a World,
    state: WorldState,
    pub query: Query,
    pub c_tau: f64,
}

impl<'a> SimObjective<'a> {
    pub fn new(world: &'a World, state: &WorldState, query: Query, c_tau: f64) -> Result<Self> {
        world.validate_state(state)?;
        check_len("query", world.scene.n_v, query.q.len())?;
        let mut state = state.clone();
        state.noise = 0.0;
        Ok(Self {
            world,
            state,
            query,
            c_tau,
        })
    }

    fn loss(&self, u: &[f64]) -> Result<f64> {
        let robot = self.world.robot_for(&self.state)?;
        let pose = forward_kinematics(&robot, u)?;
        let v = render_embedding(&self.world.scene, &self.state, &pose, 0)?;
        let tau = gravity_torque(&robot, u)?;
        let dot: f64 = v.iter().zip(&self.query.q).map(|(a, b)| a * b).sum();
        Ok(-dot + self.c_tau * tau.iter().map(|t| t * t).sum::<f64>().sqrt())
    }
}

impl ControlObjective for SimObjective<'_> {
    fn n_u(&self) -> usize {
        self.world.n_u()
    }

    fn evaluate(&self, us: &[f64], rows: usize, grads: Option<&mut [f64]>) -> Result<Vec<f64>> {
        let n_u = self.n_u();
        check_len("control inputs", rows * n_u, us.len())?;
        let lim = &self.world.robot.limits;
        let mut clamped = us.to_vec();
        for row in clamped.chunks_exact_mut(n_u) {
            lim.clamp(row);
        }
        let losses = clamped
            .chunks_exact(n_u)
            .map(|u| self.loss(u))
            .collect::<Result<Vec<_>>>()?;
        if let Some(grads) = grads {
            check_len("control gradient buffer", rows * n_u, grads.len())?;
            for (u, g) in clamped.chunks_exact(n_u).zip(grads.chunks_exact_mut(n_u)) {
                let mut x = u.to_vec();
                for j in 0..n_u {
                    let hi = (u[j] + SIM_FD_STEP).min(lim.hi[j]);
                    let lo = (u[j] - SIM_FD_STEP).max(lim.lo[j]);
                    if hi <= lo {
                        g[j] = 0.0;
                        continue;
                    }
                    x[j] = hi;
                    let f_hi = self.loss(&x)?;
                    x[j] = lo;
                    let f_lo = self.loss(&x)?;
                    x[j] = u[j];
                    g[j] = (f_hi - f_lo) / (hi - lo);
                }
            }
        }
        Ok(losses)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub object: String,
    pub template: usize,
    /// Chosen joint angles.
    pub u: Vec<f64>,
    pub loss: f64,
    /// Lowest loss among the controller's random initial samples.
    pub initial_loss: f64,
    /// Distance from the object to the camera's line of sight (m).
    pub distance: f64,
}

/// Point-to-line errors of one model in one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Model variant label, or `sim` for the simulator-as-model run.
    pub variant: String,
    pub regime: String,
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.distance)
    }

    pub fn mean(&self) -> f64 {
        self.distances().sum::<f64>() / self.entries.len().max(1) as f64
    }

    /// Population variance of the distances.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.distances().map(|d| (d - m) * (d - m)).sum::<f64>() / self.entries.len().max(1) as f64
    }
}

/// Runs the controller once per `(object, template)` pair, each with its own
/// seed derived from `cfg.seed`, and measures where the camera ends up.
pub fn eval_with<'o, F>(
    world: &World,
    state: &WorldState,
    objects: &[String],
    templates: usize,
    cfg: &ControlConfig,
    mut objective: F,
) -> Result<Vec<EvalEntry>>
where
    F: FnMut(Query) -> Result<Box<dyn ControlObjective + 'o>>,
{
    let robot = world.robot_for(state)?;
    let mut entries = Vec::with_capacity(objects.len() * templates);
    for (i, object) in objects.iter().enumerate() {
        let target = world.scene.object_position(object, state)?;
        for t in 0..templates {
            let query = query_embedding(&world.scene, object, t)?;
            let obj = objective(query)?;
            let mut c = cfg.clone();
            c.seed = mix(cfg.seed, (i * templates + t) as u64);
            let r = optimize(obj.as_ref(), &c)?;
            let pose = forward_kinematics(&robot, &r.u)?;
            entries.push(EvalEntry {
                object: object.clone(),
                template: t,
                u: r.u,
                loss: r.loss,
                initial_loss: r.initial_best_loss,
                distance: crate::sim::point_line_distance(&pose, &target),
            });
        }
    }
    Ok(entries)
}

/// Evaluates `ckpt` in regime `label` using the regime's trained bias.
pub fn run_eval(
    ckpt: &Checkpoint,
    scenario: &Scenario,
    label: &str,
    seed: u64,
    cfg: &ControlConfig,
) -> Result<EvalReport> {
    let p = ckpt.bias_for(label)?;
    run_eval_with_bias(&ckpt.model, &p, scenario, label, seed, cfg)
}

pub fn run_eval_with_bias(
    model: &SpnpbModel,
    p: &ParametricBias,
    scenario: &Scenario,
    label: &str,
    seed: u64,
    cfg: &ControlConfig,
) -> Result<EvalReport> {
    let state = scenario.state(label, seed)?;
    let entries = eval_with(
        &scenario.world,
        &state,
        &scenario.eval_objects,
        scenario.templates,
        cfg,
        |query| {
            Ok(Box::new(OwnedModelObjective {
                model,
                p: p.clone(),
                query,
                c_tau: cfg.c_tau,
            }) as Box<dyn ControlObjective>)
        },
    )?;
    Ok(EvalReport {
        variant: model.variant().to_string(),
        regime: label.into(),
        entries,
    })
}

/// The same protocol with the simulator standing in for the model.
pub fn run_eval_sim(
    scenario: &Scenario,
    label: &str,
    seed: u64,
    cfg: &ControlConfig,
) -> Result<EvalReport> {
    let state = scenario.state(label, seed)?;
    let world = &scenario.world;
    let entries = eval_with(
        world,
        &state,
        &scenario.eval_objects,
        scenario.templates,
        cfg,
        |query| {
            Ok(
                Box::new(SimObjective::new(world, &state, query, cfg.c_tau)?)
                    as Box<dyn ControlObjective>,
            )
        },
    )?;
    Ok(EvalReport {
        variant: "sim".into(),
        regime: label.into(),
        entries,
    })
}

struct OwnedModelObjective<'a> {
    model: &'a SpnpbModel,
    p: ParametricBias,
    query: Query,
    c_tau: f64,
}

impl ControlObjective for OwnedModelObjective<'_> {
    fn n_u(&self) -> usize {
        self.model.config().n_u
    }

    fn evaluate(&self, us: &[f64], rows: usize, grads: Option<&mut [f64]>) -> Result<Vec<f64>> {
        ModelObjective::new(self.model, &self.p, &self.query, self.c_tau)?.evaluate(us, rows, grads)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedVariant {
    pub variant: Variant,
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Trained models and their evaluations for each variant of the grid.
#[derive(Debug, Clone)]
pub struct AblationReport {
    pub trained: Vec<TrainedVariant>,
    /// One report per (variant, evaluation regime), variants outermost.
    pub reports: Vec<EvalReport>,
}

impl AblationReport {
    pub fn report(&self, variant: Variant, regime: &str) -> Option<&EvalReport> {
        let v = variant.to_string();
        self.reports
            .iter()
            .find(|r| r.variant == v && r.regime == regime)
    }

    pub fn model(&self, variant: Variant) -> Option<&Checkpoint> {
        self.trained
            .iter()
            .find(|t| t.variant == variant)
            .map(|t| &t.checkpoint)
    }
}

/// Trains `variant` on `ts` with the settings of `base` (seed and schedule)
/// and returns a checkpoint labelled with the trial labels.
pub fn train_checkpoint(
    ts: &TrainingSet,
    base: &TrainConfig,
    variant: Variant,
) -> Result<(Checkpoint, TrainReport)> {
    let mut cfg = base.clone();
    cfg.variant = variant;
    let (model, report) = train(ts, &cfg)?;
    let labels = ts
        .trials
        .iter()
        .filter(|t| !t.label.is_empty())
        .map(|t| (t.id, t.label.clone()))
        .collect();
    Ok((Checkpoint { model, labels }, report))
}

/// Trains every variant on the same data and evaluates each in the
/// scenario's evaluation regimes.
pub fn run_ablation(
    scenario: &Scenario,
    ts: &TrainingSet,
    train_cfg: &TrainConfig,
    control: &ControlConfig,
    variants: &[Variant],
    seed: u64,
) -> Result<AblationReport> {
    if variants.is_empty() {
        return Err(Error::Empty("variant list"));
    }
    let mut out = AblationReport {
        trained: Vec::new(),
        reports: Vec::new(),
    };
    for &v in variants {
        let (ckpt, report) = train_checkpoint(ts, train_cfg, v)?;
        for regime in &scenario.eval_regimes {
            out.reports
                .push(run_eval(&ckpt, scenario, regime, seed, control)?);
        }
        out.trained.push(TrainedVariant {
            variant: v,
            checkpoint: ckpt,
            report,
        });
    }
    Ok(out)
}

/// One momentum step of the online bias update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStep {
    /// Number of observations streamed so far.
    pub observation: usize,
    /// Step index within this update round.
    pub epoch: usize,
    pub p: ParametricBias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRun {
    pub regime: String,
    pub steps: Vec<UpdateStep>,
    pub final_p: ParametricBias,
    /// Trained trial whose bias is closest to `final_p`.
    pub nearest: TrialId,
}

/// Streams `count` fresh observations of regime `label` through an online
/// updater that starts at `p = 0`.
pub fn run_update(
    model: &SpnpbModel,
    scenario: &Scenario,
    label: &str,
    seed: u64,
    count: usize,
    cfg: &UpdaterConfig,
) -> Result<UpdateRun> {
    let mut up = PbUpdater::new(cfg.clone(), model.config().n_p)?;
    let mut steps = Vec::new();
    for (n, record) in scenario
        .probe_stream(label, seed, count)?
        .into_iter()
        .enumerate()
    {
        for (epoch, p) in up.observe(model, record)?.into_iter().enumerate() {
            steps.push(UpdateStep {
                observation: n + 1,
                epoch,
                p,
            });
        }
    }
    let final_p = up.bias().clone();
    let nearest = nearest_bias(&model.pb_table, &final_p)?;
    Ok(UpdateRun {
        regime: label.into(),
        steps,
        final_p,
        nearest,
    })
}

/// Trial whose bias is closest (Euclidean) to `p`; ties go to the lower id.
pub fn nearest_bias(table: &PbTable, p: &ParametricBias) -> Result<TrialId> {
    table
        .iter()
        .map(|(&id, q)| (q.distance(p), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or(Error::Empty("parametric bias table"))
}
