//! Synthetic scene and embedding oracle.
//!
//! Each object carries a random unit "concept" vector. A camera view is
//! embedded as the normalized sum of the concept vectors of the objects in
//! view, weighted by how close each object is to the line of sight, plus a
//! lighting-scaled background vector and Gaussian noise. Queries are concept
//! vectors perturbed by a fixed per-phrasing jitter, so cosine similarity
//! between a query and a view behaves like text/image similarity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::robot::CameraPose;
use crate::error::{Error, Result};

/// Phrasings used for object queries, indexed by template.
pub const QUERY_TEMPLATES: [&str; 5] = [
    "Look at the {}.",
    "See the {}.",
    "Find the {}.",
    "Check the {}.",
    "Where is the {}?",
];

/// Upper bound on the cosine between any two concept vectors.
pub const MAX_CONCEPT_COSINE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub name: String,
    /// Position of the object's slot in environment 0 (m).
    pub position: [f64; 3],
    pub concept_seed: u64,
    pub concept: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub n_v: usize,
    pub objects: Vec<SceneObject>,
    pub background_seed: u64,
    pub background: Vec<f64>,
    /// Weight of the background vector at full lighting.
    pub background_weight: f64,
    pub template_seed: u64,
    /// Magnitude of the per-template query jitter.
    pub query_jitter: f64,
    /// Distance of the surrounding walls from the base (metadata).
    pub wall_distance: f64,
}

/// Which variant of the world a trial is collected in.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    /// Object arrangement: object `i` sits in slot `(i + env) mod n`.
    pub env: usize,
    /// Index into the camera tilt variants.
    pub body: usize,
    pub lighting: f64,
    pub noise: f64,
    pub seed: u64,
    /// Objects removed from the scene in this state.
    pub hidden: Vec<String>,
}

impl WorldState {
    pub fn new(env: usize, body: usize, seed: u64) -> Self {
        Self {
            env,
            body,
            lighting: 1.0,
            noise: 0.01,
            seed,
            hidden: Vec::new(),
        }
    }
}

/// An object's name, concept and slot.
pub type ObjectSpec = (String, [f64; 3], u64);

impl Scene {
    pub fn new(n_v: usize, objects: Vec<ObjectSpec>, background_seed: u64) -> Result<Self> {
        if n_v == 0 {
            return Err(Error::InvalidConfig("n_v must be >= 1".into()));
        }
        let mut built: Vec<SceneObject> = Vec::with_capacity(objects.len());
        for (name, position, concept_seed) in objects {
            if built.iter().any(|o| o.name == name) {
                return Err(Error::InvalidConfig(format!("duplicate object `{name}`")));
            }
            let concept = sample_concept(n_v, concept_seed, &built)?;
            built.push(SceneObject {
                name,
                position,
                concept_seed,
                concept,
            });
        }
        Ok(Self {
            n_v,
            objects: built,
            background_seed,
            background: unit_gaussian(n_v, background_seed),
            background_weight: 0.3,
            template_seed: 7919,
            query_jitter: 0.1,
            wall_distance: 0.6,
        })
    }

    pub fn object(&self, name: &str) -> Result<&SceneObject> {
        self.objects
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| Error::Unknown {
                kind: "object",
                name: name.into(),
            })
    }

    /// Objects present in `state` with their positions after the
    /// environment's cyclic shift.
    pub fn placed_objects<'a>(
        &'a self,
        state: &'a WorldState,
    ) -> impl Iterator<Item = (&'a SceneObject, [f64; 3])> + 'a {
        let n = self.objects.len();
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| !state.hidden.contains(&o.name))
            .map(move |(i, o)| (o, self.objects[(i + state.env) % n].position))
    }

    pub fn object_position(&self, name: &str, state: &WorldState) -> Result<[f64; 3]> {
        let idx = self
            .objects
            .iter()
            .position(|o| o.name == name)
            .ok_or_else(|| Error::Unknown {
                kind: "object",
                name: name.into(),
            })?;
        Ok(self.objects[(idx + state.env) % self.objects.len()].position)
    }

    /// Unit jitter vector for query phrasing `template`.
    pub fn template_jitter(&self, template: usize) -> Vec<f64> {
        unit_gaussian(self.n_v, mix(self.template_seed, template as u64))
    }
}

/// Visibility weight of a point: 1 on the line of sight, falling linearly
/// in `cos(angle)` to 0 at the edge of the field of view.
pub fn visibility(pose: &CameraPose, point: &[f64; 3]) -> f64 {
    let d: [f64; 3] = std::array::from_fn(|i| point[i] - pose.origin[i]);
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let cos_a = (0..3).map(|i| d[i] * pose.direction[i]).sum::<f64>() / norm;
    let cos_f = pose.fov_half_angle.cos();
    ((cos_a - cos_f) / (1.0 - cos_f)).clamp(0.0, 1.0)
}

pub fn render_embedding(
    scene: &Scene,
    state: &WorldState,
    pose: &CameraPose,
    step_seed: u64,
) -> Result<Vec<f64>> {
    let dir_norm = pose.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (dir_norm - 1.0).abs() > 1e-9
        || !(pose.fov_half_angle > 0.0 && pose.fov_half_angle < std::f64::consts::FRAC_PI_2)
    {
        return Err(Error::Degenerate("camera pose"));
    }
    let mut v = vec![0.0; scene.n_v];
    for (obj, pos) in scene.placed_objects(state) {
        let w = visibility(pose, &pos);
        if w > 0.0 {
            for (vi, ci) in v.iter_mut().zip(&obj.concept) {
                *vi += w * ci;
            }
        }
    }
    let bg = scene.background_weight * state.lighting;
    for (vi, bi) in v.iter_mut().zip(&scene.background) {
        *vi += bg * bi;
    }
    if state.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(state.seed, step_seed));
        let normal = Normal::new(0.0, state.noise)
            .map_err(|_| Error::InvalidConfig("noise level".into()))?;
        for vi in v.iter_mut() {
            *vi += normal.sample(&mut rng);
        }
    }
    normalize_in_place(&mut v).ok_or(Error::Degenerate("embedding (zero vector)"))?;
    Ok(v)
}

/// A unit-norm target embedding with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub q: Vec<f64>,
    pub label: String,
}

impl Query {
    pub fn new(q: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "query must be unit-norm, |q| = {norm}"
            )));
        }
        Ok(Self {
            q,
            label: label.into(),
        })
    }
}

pub fn query_embedding(scene: &Scene, object: &str, template: usize) -> Result<Query> {
    let obj = scene.object(object)?;
    if template >= QUERY_TEMPLATES.len() {
        return Err(Error::Unknown {
            kind: "query template",
            name: template.to_string(),
        });
    }
    let jitter = scene.template_jitter(template);
    let mut q: Vec<f64> = obj
        .concept
        .iter()
        .zip(&jitter)
        .map(|(c, t)| c + scene.query_jitter * t)
        .collect();
    normalize_in_place(&mut q).ok_or(Error::Degenerate("query"))?;
    Query::new(q, QUERY_TEMPLATES[template].replace("{}", object))
}

fn sample_concept(n_v: usize, seed: u64, others: &[SceneObject]) -> Result<Vec<f64>> {
    for attempt in 0..10_000u64 {
        let c = unit_gaussian(n_v, mix(seed, attempt));
        let ok = others.iter().all(|o| {
            o.concept.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() <= MAX_CONCEPT_COSINE
        });
        if ok {
            return Ok(c);
        }
    }
    Err(Error::Degenerate(
        "concept vectors (n_v too small for the cosine bound)",
    ))
}

pub(crate) fn unit_gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if normalize_in_place(&mut v).is_some() {
            return v;
        }
    }
}

fn normalize_in_place(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

/// SplitMix64-style combination of two seeds.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose() -> CameraPose {
        CameraPose {
            origin: [0.0; 3],
            direction: [1.0, 0.0, 0.0],
            fov_half_angle: 30f64.to_radians(),
        }
    }

    fn scene(objects: Vec<ObjectSpec>) -> Scene {
        let mut s = Scene::new(16, objects, 5).unwrap();
        s.background_weight = 0.0;
        s
    }

    fn quiet() -> WorldState {
        WorldState {
            noise: 0.0,
            ..WorldState::new(0, 0, 1)
        }
    }

    #[test]
    fn object_on_line_of_sight_is_its_concept() {
        let s = scene(vec![("mug".into(), [1.0, 0.0, 0.0], 3)]);
        let v = render_embedding(&s, &quiet(), &pose(), 0).unwrap();
        assert!(v
            .iter()
            .zip(&s.objects[0].concept)
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn object_outside_view_contributes_nothing() {
        let s = scene(vec![
            ("mug".into(), [1.0, 0.0, 0.0], 3),
            ("clock".into(), [-1.0, 0.2, 0.0], 4),
        ]);
        let v = render_embedding(&s, &quiet(), &pose(), 0).unwrap();
        assert!(v
            .iter()
            .zip(&s.objects[0].concept)
            .all(|(a, b)| (a - b).abs() < 1e-15));
        // nothing at all in view and no background: degenerate
        let s = scene(vec![("clock".into(), [-1.0, 0.2, 0.0], 4)]);
        assert!(render_embedding(&s, &quiet(), &pose(), 0).is_err());
    }

    #[test]
    fn concept_vectors_respect_cosine_bound() {
        let objs = (0..8)
            .map(|i| (format!("o{i}"), [0.0; 3], i as u64))
            .collect();
        let s = Scene::new(8, objs, 1).unwrap();
        for a in &s.objects {
            for b in &s.objects {
                if a.name != b.name {
                    let cos: f64 = a.concept.iter().zip(&b.concept).map(|(x, y)| x * y).sum();
                    assert!(cos <= MAX_CONCEPT_COSINE);
                }
            }
        }
        assert!(Scene::new(
            2,
            vec![("a".into(), [0.0; 3], 1), ("a".into(), [0.0; 3], 2)],
            1
        )
        .is_err());
    }

    #[test]
    fn queries() {
        let mut s = scene(vec![("mug".into(), [1.0, 0.0, 0.0], 3)]);
        let q0 = query_embedding(&s, "mug", 0).unwrap();
        let q1 = query_embedding(&s, "mug", 1).unwrap();
        assert_ne!(q0.q, q1.q);
        assert_eq!(q0.label, "Look at the mug.");
        assert_eq!(q1.label, "See the mug.");
        assert!(query_embedding(&s, "cat", 0).is_err());
        assert!(query_embedding(&s, "mug", 5).is_err());
        s.query_jitter = 0.0;
        assert_eq!(
            query_embedding(&s, "mug", 3).unwrap().q,
            s.objects[0].concept
        );
    }

    #[test]
    fn environments_shift_objects_cyclically() {
        let s = scene(vec![
            ("a".into(), [1.0, 0.0, 0.0], 1),
            ("b".into(), [2.0, 0.0, 0.0], 2),
            ("c".into(), [3.0, 0.0, 0.0], 3),
        ]);
        let mut st = quiet();
        st.env = 1;
        assert_eq!(s.object_position("a", &st).unwrap(), [2.0, 0.0, 0.0]);
        assert_eq!(s.object_position("c", &st).unwrap(), [1.0, 0.0, 0.0]);
        st.hidden = vec!["b".into()];
        assert_eq!(s.placed_objects(&st).count(), 2);
    }

    #[test]
    fn noise_is_seeded_per_step() {
        let s = scene(vec![("mug".into(), [1.0, 0.0, 0.0], 3)]);
        let st = WorldState::new(0, 0, 1);
        let a = render_embedding(&s, &st, &pose(), 4).unwrap();
        assert_eq!(a, render_embedding(&s, &st, &pose(), 4).unwrap());
        assert_ne!(a, render_embedding(&s, &st, &pose(), 5).unwrap());
    }
}
