//! Scenario files: the regimes trials are collected in, the evaluation
//! protocol, and the world they live in.
//!
//! A scenario file is a world file (see [`crate::sim`]) with extra lines:
//!
//! ```text
//! regime E0-B1 env=0 body=1 lighting=1 noise=0.01 count=600 seed=101 hide=human
//! eval_regimes = E0-B1 E1-B0 E2-B1
//! eval_objects = mug headphones bottle tissue-box clock
//! templates = 5
//! ```
//!
//! Every `regime` option is optional (defaults: `env=0 body=0 lighting=1
//! noise=0.01 count=600`, seed = position in the file). Regimes become
//! trials in file order, so the n-th regime has trial id `n`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::formats::check_label;
use super::text::read_file;
use crate::data::{Record, TrainingSet, TrialDataset};
use crate::error::{Error, Result};
use crate::model::TrialId;
use crate::sim::{collect_trial, mix, World, WorldState, QUERY_TEMPLATES};

const BASIC: &str = include_str!("../../../../scenarios/basic.scn");
const ADVANCED: &str = include_str!("../../../../scenarios/advanced.scn");

// independent random streams derived from one regime seed
const STREAM_TRAIN: u64 = 1;
const STREAM_HELDOUT: u64 = 2;
const STREAM_PROBE: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub label: String,
    pub env: usize,
    pub body: usize,
    pub lighting: f64,
    pub noise: f64,
    pub count: usize,
    pub seed: u64,
    pub hidden: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: World,
    pub regimes: Vec<RegimeSpec>,
    /// Regimes the view-control evaluation runs in.
    pub eval_regimes: Vec<String>,
    pub eval_objects: Vec<String>,
    /// Number of query phrasings per object.
    pub templates: usize,
}

impl Scenario {
    /// Six regimes E{0,1,2}-B{0,1}, evaluated in E0-B1, E1-B0 and E2-B1.
    pub fn basic() -> Self {
        Self::parse(BASIC, Path::new("basic.scn")).expect("bundled scenario parses")
    }

    /// Eight periods over human presence and lighting.
    pub fn advanced() -> Self {
        Self::parse(ADVANCED, Path::new("advanced.scn")).expect("bundled scenario parses")
    }

    /// `basic`, `advanced`, or a path to a scenario file.
    pub fn resolve(name: &str) -> Result<Self> {
        match name {
            "basic" => Ok(Self::basic()),
            "advanced" => Ok(Self::advanced()),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut regimes: Vec<RegimeSpec> = Vec::new();
        let mut eval_regimes = None;
        let mut eval_objects = None;
        let mut templates = QUERY_TEMPLATES.len();
        let mut world_lines = Vec::new();
        let mut last = 0;
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            last = no;
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(rest) = line.strip_prefix("regime ") {
                let r = parse_regime(rest, regimes.len() as u64).map_err(|m| err(no, m))?;
                if regimes.iter().any(|o| o.label == r.label) {
                    return Err(err(no, format!("duplicate regime `{}`", r.label)));
                }
                regimes.push(r);
                continue;
            }
            let list = |v: &str| v.split_whitespace().map(String::from).collect::<Vec<_>>();
            match line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                Some(("eval_regimes", v)) => eval_regimes = Some((no, list(v))),
                Some(("eval_objects", v)) => eval_objects = Some((no, list(v))),
                Some(("templates", v)) => {
                    templates = v
                        .parse()
                        .map_err(|e| err(no, format!("bad template count: {e}")))?;
                    if templates == 0 || templates > QUERY_TEMPLATES.len() {
                        return Err(err(
                            no,
                            format!("templates must be in 1..={}", QUERY_TEMPLATES.len()),
                        ));
                    }
                }
                _ => world_lines.push((no, raw)),
            }
        }
        let world = World::parse_lines(world_lines, path)?;
        if regimes.is_empty() {
            return Err(err(last, "scenario defines no regimes".into()));
        }
        for r in &regimes {
            world
                .validate_state(&state_of(r, 0))
                .map_err(|e| err(0, format!("regime {}: {e}", r.label)))?;
        }
        let (eval_regimes, eval_objects) = match (eval_regimes, eval_objects) {
            (Some(r), Some(o)) => (r, o),
            _ => {
                return Err(err(
                    last,
                    "scenario needs `eval_regimes` and `eval_objects`".into(),
                ))
            }
        };
        for l in &eval_regimes.1 {
            if !regimes.iter().any(|r| &r.label == l) {
                return Err(err(eval_regimes.0, format!("unknown regime `{l}`")));
            }
        }
        for o in &eval_objects.1 {
            world
                .scene
                .object(o)
                .map_err(|e| err(eval_objects.0, e.to_string()))?;
        }
        Ok(Self {
            world,
            regimes,
            eval_regimes: eval_regimes.1,
            eval_objects: eval_objects.1,
            templates,
        })
    }

    /// Replaces the world's embedding width.
    pub fn with_n_v(mut self, n_v: usize) -> Result<Self> {
        if n_v != self.world.scene.n_v {
            self.world = self.world.with_n_v(n_v)?;
        }
        Ok(self)
    }

    pub fn regime(&self, label: &str) -> Result<(TrialId, &RegimeSpec)> {
        self.regimes
            .iter()
            .enumerate()
            .find(|(_, r)| r.label == label)
            .map(|(i, r)| (i as TrialId, r))
            .ok_or_else(|| Error::Unknown {
                kind: "regime",
                name: label.into(),
            })
    }

    /// World state of regime `label` under master seed `seed`.
    pub fn state(&self, label: &str, seed: u64) -> Result<WorldState> {
        Ok(state_of(self.regime(label)?.1, seed))
    }

    /// The training trial of regime `label`; `count` overrides the
    /// scenario's record count.
    pub fn collect(&self, label: &str, seed: u64, count: Option<usize>) -> Result<TrialDataset> {
        let (id, r) = self.regime(label)?;
        let state = state_of(r, seed);
        collect_trial(
            &self.world,
            &state,
            count.unwrap_or(r.count),
            mix(state.seed, STREAM_TRAIN),
            id,
            &r.label,
        )
    }

    /// One training trial per regime.
    pub fn collect_all(&self, seed: u64, count: Option<usize>) -> Result<TrainingSet> {
        let trials = self
            .regimes
            .iter()
            .map(|r| self.collect(&r.label, seed, count))
            .collect::<Result<Vec<_>>>()?;
        TrainingSet::new(trials)
    }

    /// The `k`-th held-out chunk of regime `label`, disjoint in randomness
    /// from its training trial.
    pub fn heldout(&self, label: &str, seed: u64, k: u64, count: usize) -> Result<TrialDataset> {
        let (id, r) = self.regime(label)?;
        let state = state_of(r, seed);
        collect_trial(
            &self.world,
            &state,
            count,
            mix(mix(state.seed, STREAM_HELDOUT), k),
            id,
            &r.label,
        )
    }

    /// Random-motion observations streamed to the online bias updater.
    pub fn probe_stream(&self, label: &str, seed: u64, count: usize) -> Result<Vec<Record>> {
        let (_, r) = self.regime(label)?;
        let state = state_of(r, seed);
        let stream = mix(state.seed, STREAM_PROBE);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        (0..count)
            .map(|n| {
                let theta = self.world.random_theta(&mut rng);
                self.world.observe(&state, &theta, mix(stream, n as u64))
            })
            .collect()
    }
}

fn state_of(r: &RegimeSpec, seed: u64) -> WorldState {
    WorldState {
        env: r.env,
        body: r.body,
        lighting: r.lighting,
        noise: r.noise,
        seed: mix(seed, r.seed),
        hidden: r.hidden.clone(),
    }
}

fn parse_regime(rest: &str, index: u64) -> std::result::Result<RegimeSpec, String> {
    let mut tokens = rest.split_whitespace();
    let label = tokens.next().ok_or("regime needs a label")?.to_string();
    check_label(&label).map_err(|e| e.to_string())?;
    let mut r = RegimeSpec {
        label,
        env: 0,
        body: 0,
        lighting: 1.0,
        noise: 0.01,
        count: 600,
        seed: index,
        hidden: Vec::new(),
    };
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{t}`"))?;
        let bad = |e: &dyn std::fmt::Display| format!("bad value for {k}: {e}");
        match k {
            "env" => r.env = v.parse().map_err(|e| bad(&e))?,
            "body" => r.body = v.parse().map_err(|e| bad(&e))?,
            "lighting" => r.lighting = v.parse().map_err(|e| bad(&e))?,
            "noise" => r.noise = v.parse().map_err(|e| bad(&e))?,
            "count" => r.count = v.parse().map_err(|e| bad(&e))?,
            "seed" => r.seed = v.parse().map_err(|e| bad(&e))?,
            "hide" => {
                r.hidden = v
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            _ => return Err(format!("unknown regime option `{k}`")),
        }
    }
    if r.count == 0 {
        return Err(format!("regime {} needs count >= 1", r.label));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios() {
        let b = Scenario::basic();
        assert_eq!(b.regimes.len(), 6);
        assert_eq!(b.world, World::basic(32).unwrap());
        assert_eq!(b.eval_regimes, ["E0-B1", "E1-B0", "E2-B1"]);
        assert_eq!(b.eval_objects.len() * b.templates, 25);
        assert_eq!(b.regime("E1-B0").unwrap().0, 2);

        let a = Scenario::advanced();
        assert_eq!(a.regimes.len(), 8);
        assert_eq!(
            a.regimes.iter().filter(|r| r.hidden == ["human"]).count(),
            4
        );
    }

    #[test]
    fn regime_defaults_and_errors() {
        let r = parse_regime("X lighting=0.5 hide=mug,clock", 4).unwrap();
        assert_eq!((r.env, r.body, r.count, r.seed), (0, 0, 600, 4));
        assert_eq!(r.hidden, ["mug", "clock"]);
        assert!(parse_regime("X colour=red", 0).is_err());
        assert!(parse_regime("X count=0", 0).is_err());

        let text = BASIC.replace("eval_regimes = E0-B1", "eval_regimes = E9-B9");
        assert!(matches!(
            Scenario::parse(&text, Path::new("s")),
            Err(Error::Parse { .. })
        ));
        let text = BASIC.replace("env=2 body=1", "env=2 body=4");
        assert!(Scenario::parse(&text, Path::new("s")).is_err());
    }

    #[test]
    fn streams_are_disjoint_and_deterministic() {
        let s = Scenario::basic();
        let a = s.collect("E0-B0", 1, Some(5)).unwrap();
        assert_eq!(a, s.collect("E0-B0", 1, Some(5)).unwrap());
        assert_ne!(a.records, s.collect("E0-B0", 2, Some(5)).unwrap().records);
        let h = s.heldout("E0-B0", 1, 0, 5).unwrap();
        assert_ne!(a.records, h.records);
        assert_eq!(h.id, a.id);
        assert_eq!(s.probe_stream("E0-B0", 1, 3).unwrap().len(), 3);
    }
}
