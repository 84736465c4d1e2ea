//! Desk-scale stand-in for the physical arm and the vision-language encoder.
//!
//! A [`World`] couples a [`RobotSpec`], a [`Scene`] and the list of camera
//! tilt variants ("bodies"). A [`WorldState`] picks one environment, body and
//! lighting level; [`collect_trial`] then records random motions in it.
//!
//! # World files
//!
//! Line-oriented text. Blank lines and `#` comments are ignored. Every other
//! line is either `key = value` or
//! `object <name> <x> <y> <z> <concept-seed>`:
//!
//! ```text
//! n_v = 32
//! background_seed = 1000
//! fov_deg = 30
//! body_tilts_deg = 0 30
//! object mug 0.25 -0.433 0.12 11
//! ```
//!
//! Recognized keys: `n_v`, `background_seed`, `background_weight`,
//! `template_seed`, `query_jitter`, `wall_distance`, `fov_deg`,
//! `body_tilts_deg`, `link_lengths`, `masses`, `camera_offset`.

mod robot;
mod scene;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use robot::{
    forward_kinematics, gravity_torque, point_line_distance, potential_energy, CameraPose,
    JointLimits, RobotSpec, GRAVITY,
};
pub use scene::{
    query_embedding, render_embedding, visibility, ObjectSpec, Query, Scene, SceneObject,
    WorldState, MAX_CONCEPT_COSINE, QUERY_TEMPLATES,
};

pub(crate) use scene::mix;

use crate::data::{Record, TrialDataset};
use crate::error::{Error, Result};
use crate::model::TrialId;

/// Collection cadence of the random-motion data (metadata only).
pub const COLLECTION_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub robot: RobotSpec,
    pub scene: Scene,
    /// Camera tilt of each body variant (rad).
    pub body_tilts: Vec<f64>,
}

impl World {
    /// Five desk objects on an arc in front of the arm, two camera tilts
    /// (0 and 30 degrees).
    pub fn basic(n_v: usize) -> Result<Self> {
        let names = ["mug", "headphones", "bottle", "tissue-box", "clock"];
        let slots = [
            (-60.0, 0.12),
            (-30.0, 0.22),
            (0.0, 0.15),
            (30.0, 0.25),
            (60.0, 0.10),
        ];
        let objects = names
            .iter()
            .zip(slots)
            .enumerate()
            .map(|(i, (name, (yaw, z)))| {
                let yaw = f64::to_radians(yaw);
                let pos = [round3(0.5 * yaw.cos()), round3(0.5 * yaw.sin()), z];
                (name.to_string(), pos, 11 + i as u64)
            })
            .collect();
        Ok(Self {
            robot: RobotSpec::default(),
            scene: Scene::new(n_v, objects, 1000)?,
            body_tilts: vec![0.0, 30f64.to_radians()],
        })
    }

    /// The same world with an `n_v`-dimensional embedding. Concepts and the
    /// background are redrawn from their seeds at the new width.
    pub fn with_n_v(&self, n_v: usize) -> Result<Self> {
        let s = &self.scene;
        let objects = s
            .objects
            .iter()
            .map(|o| (o.name.clone(), o.position, o.concept_seed))
            .collect();
        let mut scene = Scene::new(n_v, objects, s.background_seed)?;
        scene.background_weight = s.background_weight;
        scene.template_seed = s.template_seed;
        scene.query_jitter = s.query_jitter;
        scene.wall_distance = s.wall_distance;
        Ok(Self {
            robot: self.robot.clone(),
            scene,
            body_tilts: self.body_tilts.clone(),
        })
    }

    pub fn n_u(&self) -> usize {
        self.robot.limits.len()
    }

    pub fn n_s(&self) -> usize {
        self.scene.n_v + 4
    }

    pub fn validate_state(&self, state: &WorldState) -> Result<()> {
        if state.body >= self.body_tilts.len() {
            return Err(Error::Unknown {
                kind: "body variant",
                name: state.body.to_string(),
            });
        }
        if state.env >= self.scene.objects.len().max(1) {
            return Err(Error::Unknown {
                kind: "environment",
                name: state.env.to_string(),
            });
        }
        if !(state.lighting > 0.0 && state.lighting <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lighting must be in (0, 1], got {}",
                state.lighting
            )));
        }
        if !(state.noise >= 0.0) {
            return Err(Error::InvalidConfig("noise level must be >= 0".into()));
        }
        for name in &state.hidden {
            self.scene.object(name)?;
        }
        Ok(())
    }

    /// The robot with the state's camera tilt applied.
    pub fn robot_for(&self, state: &WorldState) -> Result<RobotSpec> {
        self.validate_state(state)?;
        Ok(self.robot.with_tilt(self.body_tilts[state.body]))
    }

    pub fn camera_pose(&self, state: &WorldState, theta: &[f64]) -> Result<CameraPose> {
        forward_kinematics(&self.robot_for(state)?, theta)
    }

    /// Sensor record for commanding `theta` in `state`.
    pub fn observe(&self, state: &WorldState, theta: &[f64], step_seed: u64) -> Result<Record> {
        let robot = self.robot_for(state)?;
        let pose = forward_kinematics(&robot, theta)?;
        let mut s = render_embedding(&self.scene, state, &pose, step_seed)?;
        s.extend(gravity_torque(&robot, theta)?);
        Ok(Record {
            u: theta.to_vec(),
            s,
        })
    }

    /// Uniform random joint angles within the limits.
    pub fn random_theta(&self, rng: &mut impl Rng) -> Vec<f64> {
        let lim = &self.robot.limits;
        lim.lo
            .iter()
            .zip(&lim.hi)
            .map(|(&lo, &hi)| {
                if lo < hi {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        Self::parse_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)), path)
    }

    /// Parses world lines, each tagged with its 1-based line number.
    pub fn parse_lines<'a>(
        lines: impl IntoIterator<Item = (usize, &'a str)>,
        path: &Path,
    ) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let defaults = Self::basic(32)?;
        let mut robot = defaults.robot;
        let mut body_tilts = defaults.body_tilts;
        let mut n_v = 32usize;
        let mut background_seed = 1000u64;
        let mut background_weight = 0.3;
        let mut template_seed = 7919u64;
        let mut query_jitter = 0.1;
        let mut wall_distance = 0.6;
        let mut objects: Vec<ObjectSpec> = Vec::new();
        let mut last_line = 0;

        for (no, raw) in lines {
            last_line = no;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("object ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(err(
                        no,
                        "expected `object <name> <x> <y> <z> <concept-seed>`".into(),
                    ));
                }
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| err(no, format!("bad number `{s}`: {e}")))
                };
                let seed = parts[4]
                    .parse::<u64>()
                    .map_err(|e| err(no, format!("bad concept seed `{}`: {e}", parts[4])))?;
                objects.push((
                    parts[0].to_string(),
                    [num(parts[1])?, num(parts[2])?, num(parts[3])?],
                    seed,
                ));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(no, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let floats = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| err(no, format!("bad number `{s}` for {key}: {e}")))
                    })
                    .collect()
            };
            let float = || -> Result<f64> {
                match floats()?.as_slice() {
                    [x] => Ok(*x),
                    _ => Err(err(no, format!("{key} takes one number"))),
                }
            };
            let int = || {
                value
                    .parse::<u64>()
                    .map_err(|e| err(no, format!("bad integer for {key}: {e}")))
            };
            let four = |v: Vec<f64>| -> Result<[f64; 4]> {
                v.try_into()
                    .map_err(|_| err(no, format!("{key} takes four numbers")))
            };
            match key {
                "n_v" => n_v = int()? as usize,
                "background_seed" => background_seed = int()?,
                "background_weight" => background_weight = float()?,
                "template_seed" => template_seed = int()?,
                "query_jitter" => query_jitter = float()?,
                "wall_distance" => wall_distance = float()?,
                "fov_deg" => robot.fov_half_angle = float()?.to_radians(),
                "body_tilts_deg" => {
                    body_tilts = floats()?.into_iter().map(f64::to_radians).collect()
                }
                "link_lengths" => robot.link_lengths = four(floats()?)?,
                "masses" => robot.masses = four(floats()?)?,
                "camera_offset" => {
                    robot.camera_offset = floats()?
                        .try_into()
                        .map_err(|_| err(no, "camera_offset takes three numbers".into()))?
                }
                _ => return Err(err(no, format!("unknown key `{key}`"))),
            }
        }
        if objects.is_empty() {
            return Err(err(last_line, "world defines no objects".into()));
        }
        if body_tilts.is_empty() {
            return Err(err(last_line, "body_tilts_deg is empty".into()));
        }
        robot
            .validate()
            .map_err(|e| err(last_line, e.to_string()))?;
        let mut scene =
            Scene::new(n_v, objects, background_seed).map_err(|e| err(last_line, e.to_string()))?;
        scene.background_weight = background_weight;
        scene.template_seed = template_seed;
        scene.query_jitter = query_jitter;
        scene.wall_distance = wall_distance;
        Ok(Self {
            robot,
            scene,
            body_tilts,
        })
    }

    /// Canonical text form, accepted by [`World::parse`].
    pub fn to_text(&self) -> String {
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let s = &self.scene;
        let mut out = String::new();
        out.push_str(&format!("n_v = {}\n", s.n_v));
        out.push_str(&format!("background_seed = {}\n", s.background_seed));
        out.push_str(&format!("background_weight = {}\n", s.background_weight));
        out.push_str(&format!("template_seed = {}\n", s.template_seed));
        out.push_str(&format!("query_jitter = {}\n", s.query_jitter));
        out.push_str(&format!("wall_distance = {}\n", s.wall_distance));
        out.push_str(&format!(
            "fov_deg = {}\n",
            self.robot.fov_half_angle.to_degrees()
        ));
        let tilts: Vec<f64> = self.body_tilts.iter().map(|t| t.to_degrees()).collect();
        out.push_str(&format!("body_tilts_deg = {}\n", join(&tilts)));
        out.push_str(&format!(
            "link_lengths = {}\n",
            join(&self.robot.link_lengths)
        ));
        out.push_str(&format!("masses = {}\n", join(&self.robot.masses)));
        out.push_str(&format!(
            "camera_offset = {}\n",
            join(&self.robot.camera_offset)
        ));
        for o in &s.objects {
            let [x, y, z] = o.position;
            out.push_str(&format!(
                "object {} {} {} {} {}\n",
                o.name, x, y, z, o.concept_seed
            ));
        }
        out
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Records `count` random motions in `state`. Deterministic in `seed`.
pub fn collect_trial(
    world: &World,
    state: &WorldState,
    count: usize,
    seed: u64,
    id: TrialId,
    label: &str,
) -> Result<TrialDataset> {
    if count == 0 {
        return Err(Error::InvalidConfig(
            "trial record count must be >= 1".into(),
        ));
    }
    world.validate_state(state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..count)
        .map(|n| {
            let theta = world.random_theta(&mut rng);
            world.observe(state, &theta, mix(seed, n as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    TrialDataset::new(id, label, records)
}
