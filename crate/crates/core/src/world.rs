//! Synthetic semantic worlds: objects with embeddings, a cone-of-view
//! observation model and random-walk data collection.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{storage_exact, Dataset, Record};
use crate::error::{Error, Result};
use crate::geometry::{cosine_sim, dot, normalize, Pose, UnitEmbedding};

/// Objects at least this large (radius, meters) count as easy goals.
pub const EASY_RADIUS_THRESHOLD: f64 = 1.0;
const EASY_RADIUS: (f64, f64) = (1.5, 3.0);
const HARD_RADIUS: (f64, f64) = (0.3, 0.6);
const MAX_PAIRWISE_COS: f64 = 0.5;
const REJECTION_TRIES: usize = 10_000;
const ORACLE_HEADINGS: usize = 36;

/// Axis-aligned ground rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extent {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Extent {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let e = Extent { min, max };
        e.validate()?;
        Ok(e)
    }

    /// `[0, side]²`.
    pub fn square(side: f64) -> Result<Self> {
        Extent::new([0.0, 0.0], [side, side])
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..2 {
            if !(self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i]) {
                return Err(Error::InvalidArgument(format!(
                    "extent axis {i} must satisfy min < max"
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldObject {
    pub id: u32,
    pub label: String,
    pub center: [f64; 3],
    pub radius: f64,
    pub base_embedding: UnitEmbedding,
}

impl WorldObject {
    pub fn is_easy(&self) -> bool {
        self.radius >= EASY_RADIUS_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorld {
    extent: Extent,
    objects: Vec<WorldObject>,
    ambient_embedding: UnitEmbedding,
    seed: u64,
}

/// A static world of semantic objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWorld", into = "RawWorld")]
pub struct WorldSpec {
    extent: Extent,
    objects: Vec<WorldObject>,
    ambient_embedding: UnitEmbedding,
    seed: u64,
}

impl TryFrom<RawWorld> for WorldSpec {
    type Error = Error;

    fn try_from(r: RawWorld) -> Result<Self> {
        WorldSpec::new(r.extent, r.objects, r.ambient_embedding, r.seed)
    }
}

impl From<WorldSpec> for RawWorld {
    fn from(w: WorldSpec) -> Self {
        RawWorld {
            extent: w.extent,
            objects: w.objects,
            ambient_embedding: w.ambient_embedding,
            seed: w.seed,
        }
    }
}

impl WorldSpec {
    pub fn new(
        extent: Extent,
        objects: Vec<WorldObject>,
        ambient_embedding: UnitEmbedding,
        seed: u64,
    ) -> Result<Self> {
        extent.validate()?;
        let d = ambient_embedding.dim();
        let mut ids = HashSet::new();
        for o in &objects {
            if !ids.insert(o.id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate object id {}",
                    o.id
                )));
            }
            if !(o.radius > 0.0 && o.radius.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "object {} radius must be > 0",
                    o.id
                )));
            }
            if !o.center.iter().all(|v| v.is_finite())
                || !extent.contains([o.center[0], o.center[1]])
            {
                return Err(Error::InvalidArgument(format!(
                    "object {} lies outside the extent",
                    o.id
                )));
            }
            if o.base_embedding.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: o.base_embedding.dim(),
                });
            }
        }
        Ok(WorldSpec {
            extent,
            objects,
            ambient_embedding,
            seed,
        })
    }

    pub fn extent(&self) -> &Extent {
        &self.extent
    }

    pub fn objects(&self) -> &[WorldObject] {
        &self.objects
    }

    pub fn ambient_embedding(&self) -> &UnitEmbedding {
        &self.ambient_embedding
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn d(&self) -> usize {
        self.ambient_embedding.dim()
    }

    pub fn object(&self, id: u32) -> Result<&WorldObject> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or(Error::UnknownObject(id))
    }

    /// `sqrt(area / n_objects)`, the side of the square each object gets on average.
    pub fn mean_object_spacing(&self) -> f64 {
        (self.extent.area() / self.objects.len().max(1) as f64).sqrt()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        WorldSpec::from_json(&fs::read_to_string(path)?)
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> UnitEmbedding {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = normalize(&v) {
            return u;
        }
    }
}

/// Random world with `n_objects` distinguishable objects.
///
/// Object embeddings are i.i.d. uniform on the sphere, redrawn until every
/// pairwise `|cos|` (including against the ambient vector) is below 0.5.
/// `round(hard_fraction · n)` objects get small radii. Centers rest on the
/// ground (`z = radius`) and keep a minimum spacing.
pub fn gen_world(
    seed: u64,
    extent: Extent,
    n_objects: usize,
    d: usize,
    hard_fraction: f64,
) -> Result<WorldSpec> {
    extent.validate()?;
    if n_objects == 0 {
        return Err(Error::InvalidArgument("n_objects must be >= 1".into()));
    }
    if d < 2 {
        return Err(Error::InvalidArgument("d must be >= 2".into()));
    }
    if !(0.0..=1.0).contains(&hard_fraction) {
        return Err(Error::InvalidArgument(
            "hard_fraction must lie in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ambient = random_unit(&mut rng, d);
    let mut embeddings: Vec<UnitEmbedding> = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        let mut accepted = None;
        for _ in 0..REJECTION_TRIES {
            let c = random_unit(&mut rng, d);
            let ok = std::iter::once(&ambient)
                .chain(&embeddings)
                .all(|e| dot(e.as_slice(), c.as_slice()).abs() < MAX_PAIRWISE_COS);
            if ok {
                accepted = Some(c);
                break;
            }
        }
        embeddings.push(accepted.ok_or_else(|| {
            Error::WorldGeneration(format!(
                "no embedding with pairwise |cos| < {MAX_PAIRWISE_COS} for object {i} after {REJECTION_TRIES} draws (d={d})"
            ))
        })?);
    }

    let n_hard = (hard_fraction * n_objects as f64).round() as usize;
    let mut hard = vec![false; n_objects];
    hard[..n_hard].iter_mut().for_each(|h| *h = true);
    for i in (1..n_objects).rev() {
        let j = rng.random_range(0..=i);
        hard.swap(i, j);
    }

    let spacing = (0.5 * (extent.area() / n_objects as f64).sqrt()).min(5.0);
    let margin = (0.05 * extent.width().min(extent.height())).min(EASY_RADIUS.1);
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        let mut placed = None;
        for _ in 0..REJECTION_TRIES {
            let p = [
                rng.random_range(extent.min[0] + margin..=extent.max[0] - margin),
                rng.random_range(extent.min[1] + margin..=extent.max[1] - margin),
            ];
            if centers
                .iter()
                .all(|c| ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)).sqrt() >= spacing)
            {
                placed = Some(p);
                break;
            }
        }
        centers.push(placed.ok_or_else(|| {
            Error::WorldGeneration(format!(
                "cannot place object {i} {spacing:.2} m from the others"
            ))
        })?);
    }

    let objects = (0..n_objects)
        .map(|i| {
            let (lo, hi) = if hard[i] { HARD_RADIUS } else { EASY_RADIUS };
            let radius = rng.random_range(lo..hi);
            WorldObject {
                id: i as u32,
                label: format!("{}-{i:02}", if hard[i] { "hard" } else { "easy" }),
                center: [centers[i][0], centers[i][1], radius],
                radius,
                base_embedding: embeddings[i].clone(),
            }
        })
        .collect();
    WorldSpec::new(extent, objects, ambient, seed)
}

/// How poses see objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationModel {
    /// Half-angle of the view cone, radians.
    pub fov_half_angle: f64,
    /// Upper bound on any object's visibility range, meters.
    pub max_range: f64,
    /// Per-object range is `min(max_range, range_per_radius · radius)`.
    pub range_per_radius: f64,
    /// Distance decay length, meters.
    pub attenuation: f64,
    pub noise_sigma: f64,
    pub ambient_weight: f64,
    /// Height of every sampled camera, meters.
    pub camera_height: f64,
}

impl Default for ObservationModel {
    fn default() -> Self {
        ObservationModel {
            fov_half_angle: 60f64.to_radians(),
            max_range: 20.0,
            range_per_radius: 12.0,
            attenuation: 4.0,
            noise_sigma: 0.01,
            ambient_weight: 0.5,
            camera_height: 1.5,
        }
    }
}

impl ObservationModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("observation model: {m}")));
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= PI) {
            return bad("fov_half_angle must lie in (0, pi]");
        }
        if !(self.max_range > 0.0 && self.range_per_radius > 0.0 && self.attenuation > 0.0) {
            return bad("max_range, range_per_radius and attenuation must be > 0");
        }
        if !(self.noise_sigma >= 0.0 && self.ambient_weight >= 0.0) {
            return bad("noise_sigma and ambient_weight must be >= 0");
        }
        if !self.camera_height.is_finite() {
            return bad("camera_height must be finite");
        }
        Ok(())
    }

    pub fn object_range(&self, obj: &WorldObject) -> f64 {
        self.max_range.min(self.range_per_radius * obj.radius)
    }

    /// Mixture weight of `obj` seen from `x`, or `None` when out of view.
    pub fn weight(&self, obj: &WorldObject, x: &Pose) -> Option<f64> {
        let t = x.t();
        let v = [
            obj.center[0] - t[0],
            obj.center[1] - t[1],
            obj.center[2] - t[2],
        ];
        let dist = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if dist > self.object_range(obj) {
            return None;
        }
        let angle = if dist == 0.0 {
            0.0
        } else {
            (dot(&x.forward(), &v) / dist).clamp(-1.0, 1.0).acos()
        };
        if angle > self.fov_half_angle {
            return None;
        }
        let falloff = (angle * PI / (2.0 * self.fov_half_angle)).cos().max(0.0);
        Some((-dist / self.attenuation).exp() * falloff)
    }
}

fn mixture(world: &WorldSpec, obs: &ObservationModel, x: &Pose) -> Vec<f64> {
    let mut acc: Vec<f64> = world
        .ambient_embedding
        .as_slice()
        .iter()
        .map(|v| obs.ambient_weight * v)
        .collect();
    for o in &world.objects {
        if let Some(w) = obs.weight(o, x) {
            for (a, b) in acc.iter_mut().zip(o.base_embedding.as_slice()) {
                *a += w * b;
            }
        }
    }
    acc
}

/// Noiseless observation at `x`.
pub fn observe_noiseless(world: &WorldSpec, obs: &ObservationModel, x: &Pose) -> UnitEmbedding {
    observe_inner(world, obs, x, None::<&mut ChaCha8Rng>)
}

/// `normalize(w_amb·ambient + Σ_visible w_i·base_i + noise)`.
///
/// Never fails: a degenerate mixture falls back to the ambient embedding.
pub fn observe<R: Rng + ?Sized>(
    world: &WorldSpec,
    obs: &ObservationModel,
    x: &Pose,
    rng: &mut R,
) -> UnitEmbedding {
    observe_inner(world, obs, x, Some(rng))
}

fn observe_inner<R: Rng + ?Sized>(
    world: &WorldSpec,
    obs: &ObservationModel,
    x: &Pose,
    rng: Option<&mut R>,
) -> UnitEmbedding {
    let mut acc = mixture(world, obs, x);
    if let Some(rng) = rng {
        if obs.noise_sigma > 0.0 {
            for a in acc.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *a += obs.noise_sigma * n;
            }
        }
    }
    normalize(&acc).unwrap_or_else(|_| world.ambient_embedding.clone())
}

/// Goal embedding for `object_id`: the object's base embedding.
pub fn goal_embedding(world: &WorldSpec, object_id: u32) -> Result<UnitEmbedding> {
    Ok(world.object(object_id)?.base_embedding.clone())
}

/// Random-walk collection policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    /// Independent walkers; each gets its own stream of the seed.
    pub walkers: usize,
    pub step_length: f64,
    /// Standard deviation of the per-step heading change, radians.
    pub heading_jitter: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walkers: 16,
            step_length: 1.0,
            heading_jitter: 0.35,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walkers == 0 || !(self.step_length > 0.0) || !(self.heading_jitter >= 0.0) {
            return Err(Error::InvalidArgument(
                "walk: need walkers >= 1, step_length > 0, heading_jitter >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `n_samples` observations along random walks with the default policy.
pub fn gen_dataset(
    world: &WorldSpec,
    obs: &ObservationModel,
    n_samples: usize,
    seed: u64,
) -> Result<Dataset> {
    gen_dataset_with(world, obs, &WalkConfig::default(), n_samples, seed)
}

/// Walkers move with jittered headings and reflect off the extent border.
/// Camera yaw is uniform and independent of the walking direction. Poses are
/// rounded through `f32` before observation so stored records recompute
/// exactly, and records are returned as they decode from a file.
pub fn gen_dataset_with(
    world: &WorldSpec,
    obs: &ObservationModel,
    walk: &WalkConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Dataset> {
    obs.validate()?;
    walk.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let walkers = walk.walkers.min(n_samples);
    let ext = world.extent;
    let shards: Vec<Vec<Record>> = (0..walkers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64);
            let n = n_samples / walkers + usize::from(w < n_samples % walkers);
            let mut p = [
                rng.random_range(ext.min[0]..=ext.max[0]),
                rng.random_range(ext.min[1]..=ext.max[1]),
            ];
            let mut heading: f64 = rng.random_range(-PI..PI);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let yaw: f64 = rng.random_range(-PI..PI);
                let pose = Pose::from_yaw([p[0], p[1], obs.camera_height], yaw).quantized();
                let z = observe(world, obs, &pose, &mut rng);
                out.push(storage_exact(Record { pose, z }));
                let jitter: f64 = rng.sample(StandardNormal);
                heading += walk.heading_jitter * jitter;
                let mut dir = [heading.cos(), heading.sin()];
                for i in 0..2 {
                    let next = p[i] + walk.step_length * dir[i];
                    if next < ext.min[i] || next > ext.max[i] {
                        dir[i] = -dir[i];
                    }
                    p[i] = (p[i] + walk.step_length * dir[i]).clamp(ext.min[i], ext.max[i]);
                }
                heading = dir[1].atan2(dir[0]);
            }
            out
        })
        .collect();
    Dataset::new(world.d(), shards.into_iter().flatten().collect())
}

/// Grid coordinates `min + i·step`, `i = 0..=⌊(max−min)/step⌋`.
fn grid_axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| min + i as f64 * step).collect()
}

/// Exhaustive oracle for the best view of `object_id`: maximizes the
/// noiseless similarity to the goal over a position grid at camera height and
/// 36 evenly spaced headings. Ties go to the lexicographically first
/// `(ix, iy, heading)` index.
pub fn best_visible_pose(
    world: &WorldSpec,
    obs: &ObservationModel,
    object_id: u32,
    grid_step: f64,
) -> Result<Pose> {
    obs.validate()?;
    if !(grid_step > 0.0) {
        return Err(Error::InvalidArgument("grid_step must be > 0".into()));
    }
    let goal = goal_embedding(world, object_id)?;
    let ext = world.extent;
    let xs = grid_axis(ext.min[0], ext.max[0], grid_step);
    let ys = grid_axis(ext.min[1], ext.max[1], grid_step);
    let best_per_column: Vec<(f64, Pose)> = xs
        .par_iter()
        .map(|&x| {
            let mut best = (f64::NEG_INFINITY, Pose::identity());
            for &y in &ys {
                for k in 0..ORACLE_HEADINGS {
                    let yaw = -PI + 2.0 * PI * k as f64 / ORACLE_HEADINGS as f64;
                    let pose = Pose::from_yaw([x, y, obs.camera_height], yaw);
                    let s = cosine_sim(&observe_noiseless(world, obs, &pose), &goal)
                        .unwrap_or(f64::NEG_INFINITY);
                    if s > best.0 {
                        best = (s, pose);
                    }
                }
            }
            best
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, Pose::identity());
    for c in best_per_column {
        if c.0 > best.0 {
            best = c;
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_object_world(ambient_weight: f64) -> (WorldSpec, ObservationModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = random_unit(&mut rng, 8);
        let amb = random_unit(&mut rng, 8);
        let obj = WorldObject {
            id: 0,
            label: "easy-00".into(),
            center: [10.0, 10.0, 1.5],
            radius: 2.0,
            base_embedding: base,
        };
        let w = WorldSpec::new(Extent::square(20.0).unwrap(), vec![obj], amb, 0).unwrap();
        let obs = ObservationModel {
            noise_sigma: 0.0,
            ambient_weight,
            ..Default::default()
        };
        (w, obs)
    }

    #[test]
    fn same_seed_same_world() {
        let e = Extent::square(100.0).unwrap();
        let a = gen_world(7, e, 20, 32, 0.3).unwrap();
        let b = gen_world(7, e, 20, 32, 0.3).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(
            a.to_json().unwrap(),
            gen_world(8, e, 20, 32, 0.3).unwrap().to_json().unwrap()
        );
        assert_eq!(a.objects().iter().filter(|o| !o.is_easy()).count(), 6);
    }

    #[test]
    fn pairwise_embeddings_are_distinguishable() {
        let w = gen_world(3, Extent::square(100.0).unwrap(), 20, 32, 0.5).unwrap();
        let objs = w.objects();
        for i in 0..objs.len() {
            for j in i + 1..objs.len() {
                let c = cosine_sim(&objs[i].base_embedding, &objs[j].base_embedding).unwrap();
                assert!(c.abs() < 0.5);
            }
        }
        for (i, o) in objs.iter().enumerate() {
            let g = goal_embedding(&w, o.id).unwrap();
            assert!((cosine_sim(&g, &o.base_embedding).unwrap() - 1.0).abs() < 1e-12);
            for (j, p) in objs.iter().enumerate() {
                if i != j {
                    assert!(cosine_sim(&g, &p.base_embedding).unwrap() < 0.5);
                }
            }
        }
        assert!(matches!(
            goal_embedding(&w, 999),
            Err(Error::UnknownObject(999))
        ));
    }

    #[test]
    fn single_object_world_and_rejection_failure() {
        let w = gen_world(1, Extent::square(10.0).unwrap(), 1, 4, 0.0).unwrap();
        assert_eq!(w.objects().len(), 1);
        assert!(matches!(
            gen_world(1, Extent::square(100.0).unwrap(), 40, 2, 0.0),
            Err(Error::WorldGeneration(_))
        ));
        assert!(gen_world(1, Extent::square(100.0).unwrap(), 0, 8, 0.0).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let w = gen_world(5, Extent::square(50.0).unwrap(), 5, 16, 0.4).unwrap();
        let s = w.to_json().unwrap();
        let back = WorldSpec::from_json(&s).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.content_hash(), w.content_hash());
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["objects"][0]["radius"] = serde_json::json!(-1.0);
        assert!(WorldSpec::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["objects"][1]["id"] = serde_json::json!(0);
        assert!(WorldSpec::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(WorldSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn staring_at_single_object_returns_its_embedding() {
        let (w, obs) = one_object_world(0.0);
        let x = Pose::from_yaw([5.0, 10.0, 1.5], 0.0);
        let z = observe(&w, &obs, &x, &mut ChaCha8Rng::seed_from_u64(0));
        let base = &w.objects()[0].base_embedding;
        for (a, b) in z.as_slice().iter().zip(base.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nothing_visible_returns_ambient() {
        let (w, obs) = one_object_world(0.2);
        let x = Pose::from_yaw([5.0, 10.0, 1.5], PI);
        let z = observe_noiseless(&w, &obs, &x);
        assert!((cosine_sim(&z, w.ambient_embedding()).unwrap() - 1.0).abs() < 1e-12);
        // no ambient and nothing in view still yields a unit vector
        let (w0, obs0) = one_object_world(0.0);
        let z = observe(&w0, &obs0, &x, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((z.as_slice().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_falls_as_pose_turns_away() {
        let (w, obs) = one_object_world(0.2);
        let base = &w.objects()[0].base_embedding;
        let mut prev = f64::INFINITY;
        for k in 0..=180 {
            let yaw = k as f64 * PI / 180.0;
            let z = observe_noiseless(&w, &obs, &Pose::from_yaw([5.0, 10.0, 1.5], yaw));
            let c = cosine_sim(&z, base).unwrap();
            assert!(c <= prev + 1e-12, "yaw {yaw}: {c} > {prev}");
            prev = c;
        }
    }

    #[test]
    fn noisy_observations_are_unit_and_finite() {
        let w = gen_world(2, Extent::square(30.0).unwrap(), 6, 16, 0.5).unwrap();
        let obs = ObservationModel {
            noise_sigma: 0.5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let x = Pose::from_yaw(
                [
                    rng.random_range(0.0..30.0),
                    rng.random_range(0.0..30.0),
                    1.5,
                ],
                rng.random_range(-PI..PI),
            );
            let z = observe(&w, &obs, &x, &mut rng);
            assert!(z.as_slice().iter().all(|v| v.is_finite()));
            assert!((z.as_slice().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_is_reproducible_and_recomputes_exactly() {
        let w = gen_world(4, Extent::square(40.0).unwrap(), 5, 8, 0.4).unwrap();
        let obs = ObservationModel {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let a = gen_dataset(&w, &obs, 300, 11).unwrap();
        let b = gen_dataset(&w, &obs, 300, 11).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.len(), 300);
        let back = Dataset::from_bytes(&a.to_bytes()).unwrap();
        for r in back.records() {
            assert!(w.extent().contains([r.pose.t()[0], r.pose.t()[1]]));
            let z = observe_noiseless(&w, &obs, &r.pose);
            let z32: Vec<f64> = z.as_slice().iter().map(|v| *v as f32 as f64).collect();
            assert_eq!(r.z.as_slice(), &z32[..]);
        }
    }

    #[test]
    fn easy_objects_are_visible_from_more_poses() {
        let w = gen_world(6, Extent::square(60.0).unwrap(), 8, 16, 0.5).unwrap();
        let obs = ObservationModel::default();
        let count = |o: &WorldObject| {
            let mut n = 0;
            for x in grid_axis(0.0, 60.0, 1.0) {
                for y in grid_axis(0.0, 60.0, 1.0) {
                    for k in 0..8 {
                        let p = Pose::from_yaw([x, y, obs.camera_height], k as f64 * PI / 4.0);
                        n += obs.weight(o, &p).is_some() as usize;
                    }
                }
            }
            n
        };
        let easy_min = w
            .objects()
            .iter()
            .filter(|o| o.is_easy())
            .map(count)
            .min()
            .unwrap();
        let hard_max = w
            .objects()
            .iter()
            .filter(|o| !o.is_easy())
            .map(count)
            .max()
            .unwrap();
        assert!(easy_min > hard_max, "{easy_min} vs {hard_max}");
    }

    #[test]
    fn best_visible_pose_oracle() {
        let (w, obs) = one_object_world(0.2);
        let goal = goal_embedding(&w, 0).unwrap();
        let sim = |p: &Pose| cosine_sim(&observe_noiseless(&w, &obs, p), &goal).unwrap();
        let coarse = best_visible_pose(&w, &obs, 0, 1.0).unwrap();
        let fine = best_visible_pose(&w, &obs, 0, 0.5).unwrap();
        assert!(obs.weight(&w.objects()[0], &coarse).is_some());
        assert!(sim(&fine) >= sim(&coarse));
        let best = sim(&fine);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let p = Pose::from_yaw(
                [
                    rng.random_range(0.0..20.0),
                    rng.random_range(0.0..20.0),
                    1.5,
                ],
                rng.random_range(-PI..PI),
            );
            assert!(best >= sim(&p));
        }
        assert!(best_visible_pose(&w, &obs, 3, 1.0).is_err());
    }
}
