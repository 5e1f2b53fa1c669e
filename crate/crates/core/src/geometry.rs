//! Pose and unit-embedding arithmetic shared by every other module.
//!
//! Quaternions are stored as `(w, x, y, z)`, right-handed, and rotate the
//! camera frame into the world frame. The camera looks along its local `+x`
//! axis. The network input ordering is `[t_x, t_y, t_z, q_w, q_x, q_y, q_z]`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-norm invariants of quaternions and embeddings.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Camera pose: position in meters plus a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct Pose {
    t: [f64; 3],
    q: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    t: [f64; 3],
    q: [f64; 4],
}

impl TryFrom<RawPose> for Pose {
    type Error = Error;

    fn try_from(raw: RawPose) -> Result<Self> {
        Pose::from_stored(raw.t, raw.q)
    }
}

impl From<Pose> for RawPose {
    fn from(p: Pose) -> Self {
        RawPose { t: p.t, q: p.q }
    }
}

impl Pose {
    /// Builds a pose, renormalizing `q`. Fails on non-finite input or a zero quaternion.
    pub fn new(t: [f64; 3], q: [f64; 4]) -> Result<Self> {
        if t.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "pose has non-finite component".into(),
            ));
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::DegenerateVector);
        }
        Ok(Pose {
            t,
            q: q.map(|v| v / n),
        })
    }

    /// Planar pose at `t` with heading `yaw` (radians, about world `+z`).
    pub fn from_yaw(t: [f64; 3], yaw: f64) -> Self {
        let h = 0.5 * yaw;
        Pose {
            t,
            q: [h.cos(), 0.0, 0.0, h.sin()],
        }
    }

    pub fn identity() -> Self {
        Pose {
            t: [0.0; 3],
            q: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Inverse of [`Pose::to_array`]; the quaternion block is renormalized.
    pub fn from_array(x: &[f64; 7]) -> Result<Self> {
        Pose::new([x[0], x[1], x[2]], [x[3], x[4], x[5], x[6]])
    }

    pub fn t(&self) -> [f64; 3] {
        self.t
    }

    pub fn q(&self) -> [f64; 4] {
        self.q
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.t[0], self.t[1], self.t[2], self.q[0], self.q[1], self.q[2], self.q[3],
        ]
    }

    pub fn with_position(&self, t: [f64; 3]) -> Self {
        Pose { t, q: self.q }
    }

    /// Heading of the camera's forward axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        let f = self.forward();
        f[1].atan2(f[0])
    }

    /// Camera forward axis (local `+x`) expressed in the world frame.
    pub fn forward(&self) -> [f64; 3] {
        let [w, x, y, z] = self.q;
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y + w * z),
            2.0 * (x * z - w * y),
        ]
    }

    /// Rounds every component through `f32`. Used wherever a pose must survive
    /// a binary round trip exactly.
    pub fn quantized(&self) -> Self {
        let t = self.t.map(|v| v as f32 as f64);
        let q = self.q.map(|v| v as f32 as f64);
        Pose { t, q }
    }

    /// Like [`Pose::new`], but keeps a quaternion within
    /// [`UNIT_TOLERANCE`] of unit bit-exact, matching the binary
    /// decoders, so text round trips are lossless.
    pub(crate) fn from_stored(t: [f64; 3], q: [f64; 4]) -> Result<Self> {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let finite = t.iter().chain(&q).all(|v| v.is_finite());
        if finite && (n - 1.0).abs() <= UNIT_TOLERANCE {
            return Ok(Pose { t, q });
        }
        Pose::new(t, q)
    }

    pub(crate) fn from_parts_unchecked(t: [f64; 3], q: [f64; 4]) -> Self {
        Pose { t, q }
    }
}

/// Hamilton product `a ⊗ b`.
pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [aw, ax, ay, az] = a;
    let [bw, bx, by, bz] = b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

/// A unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitEmbedding(Vec<f64>);

impl TryFrom<Vec<f64>> for UnitEmbedding {
    type Error = Error;

    /// Vectors already unit to rounding are kept bit-exact so text round trips
    /// are lossless; anything else is normalized.
    fn try_from(v: Vec<f64>) -> Result<Self> {
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if v.iter().all(|x| x.is_finite()) && (n2 - 1.0).abs() <= 1e-14 {
            return Ok(UnitEmbedding(v));
        }
        normalize(&v)
    }
}

impl From<UnitEmbedding> for Vec<f64> {
    fn from(e: UnitEmbedding) -> Self {
        e.0
    }
}

impl UnitEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        UnitEmbedding(self.0.iter().map(|v| -v).collect())
    }

    /// Caller guarantees `v` already has unit norm.
    pub(crate) fn from_unit_unchecked(v: Vec<f64>) -> Self {
        debug_assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
        UnitEmbedding(v)
    }
}

/// Scales `v` to unit length.
pub fn normalize(v: &[f64]) -> Result<UnitEmbedding> {
    if v.is_empty() {
        return Err(Error::DegenerateVector);
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateVector);
    }
    Ok(UnitEmbedding(v.iter().map(|x| x / n).collect()))
}

/// Dot product of two unit embeddings, clamped to `[-1, 1]`.
pub fn cosine_sim(a: &UnitEmbedding, b: &UnitEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(dot(&a.0, &b.0).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean distance between the positions of two poses; orientation is ignored.
pub fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    position_distance(&a.t, &b.t)
}

pub fn position_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// `|q1 · q2|`; `q` and `-q` are the same rotation.
pub fn quat_abs_dot(q1: &[f64; 4], q2: &[f64; 4]) -> f64 {
    q1.iter()
        .zip(q2)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .abs()
        .min(1.0)
}

/// Gaussian planar jitter of a pose.
///
/// The position moves by `N(0, σ_pos²)` independently along world `x` and `y`;
/// height is kept. The orientation is pre-multiplied by a yaw rotation of
/// `N(0, σ_yaw²)` radians and renormalized.
pub fn perturb_pose<R: Rng + ?Sized>(
    x: &Pose,
    sigma_pos: f64,
    sigma_yaw: f64,
    rng: &mut R,
) -> Pose {
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let dyaw: f64 = rng.sample(StandardNormal);
    let t = [x.t[0] + sigma_pos * dx, x.t[1] + sigma_pos * dy, x.t[2]];
    let h = 0.5 * sigma_yaw * dyaw;
    let q = quat_mul([h.cos(), 0.0, 0.0, h.sin()], x.q);
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    Pose {
        t,
        q: q.map(|v| v / n),
    }
}
