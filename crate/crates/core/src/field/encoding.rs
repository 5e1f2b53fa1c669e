use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// NeRF-style frequency encoding of the 7-D pose vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionalEncodingSpec {
    /// Frequency bands per position component.
    pub l_pos: u32,
    /// Frequency bands per quaternion component.
    pub l_quat: u32,
    pub include_identity: bool,
}

impl Default for PositionalEncodingSpec {
    fn default() -> Self {
        PositionalEncodingSpec {
            l_pos: 6,
            l_quat: 2,
            include_identity: true,
        }
    }
}

impl PositionalEncodingSpec {
    /// `7·[identity] + 2·(3·l_pos + 4·l_quat)`.
    pub fn width(&self) -> usize {
        let id = if self.include_identity { 7 } else { 0 };
        id + 2 * (3 * self.l_pos as usize + 4 * self.l_quat as usize)
    }

    fn bands(&self, component: usize) -> u32 {
        if component < 3 {
            self.l_pos
        } else {
            self.l_quat
        }
    }
}

/// Axis-aligned box used to map positions into `[-1, 1]³` before encoding.
///
/// Stored as `f32` so it survives the model file unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionBounds {
    pub min: [f32; 3],
    pub max: [f32; 3],
}

impl PositionBounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = PositionBounds {
            min: min.map(|v| v as f32),
            max: max.map(|v| v as f32),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i]) {
                return Err(Error::InvalidArgument(format!(
                    "position bounds axis {i}: need finite min < max, got [{}, {}]",
                    self.min[i], self.max[i]
                )));
            }
        }
        Ok(())
    }

    /// Unit cube `[-1, 1]³`, where normalized and raw coordinates coincide.
    pub fn unit() -> Self {
        PositionBounds {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }

    /// Inflates every axis by `fraction` of its width on each side.
    pub fn inflated(&self, fraction: f64) -> Self {
        let mut out = *self;
        for i in 0..3 {
            let w = (self.max[i] - self.min[i]) as f64;
            out.min[i] = (self.min[i] as f64 - fraction * w) as f32;
            out.max[i] = (self.max[i] as f64 + fraction * w) as f32;
        }
        out
    }

    pub fn clamp(&self, t: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| t[i].clamp(self.min[i] as f64, self.max[i] as f64))
    }

    pub fn contains(&self, t: [f64; 3]) -> bool {
        (0..3).all(|i| t[i] >= self.min[i] as f64 && t[i] <= self.max[i] as f64)
    }

    /// Half of the widest axis, meters; one normalized unit along that axis.
    pub fn half_span(&self) -> f64 {
        (0..3)
            .map(|i| (self.max[i] as f64 - self.min[i] as f64) / 2.0)
            .fold(0.0, f64::max)
    }

    /// `du/dt` per axis.
    fn scale(&self, i: usize) -> f64 {
        2.0 / (self.max[i] as f64 - self.min[i] as f64)
    }

    fn to_unit(&self, i: usize, t: f64) -> f64 {
        (t - self.min[i] as f64) * self.scale(i) - 1.0
    }
}

/// Encoded features with, for each feature, the pose component it depends on
/// and its derivative with respect to that raw component.
#[derive(Debug, Clone)]
pub(crate) struct Encoded {
    pub features: Vec<f64>,
    pub component: Vec<u8>,
    pub derivative: Vec<f64>,
}

pub(crate) fn encode_with_derivative(
    spec: &PositionalEncodingSpec,
    bounds: &PositionBounds,
    x: &[f64; 7],
) -> Encoded {
    let width = spec.width();
    let mut features = Vec::with_capacity(width);
    let mut component = Vec::with_capacity(width);
    let mut derivative = Vec::with_capacity(width);
    let mut unit = [0.0; 7];
    let mut scale = [1.0; 7];
    for i in 0..7 {
        if i < 3 {
            unit[i] = bounds.to_unit(i, x[i]);
            scale[i] = bounds.scale(i);
        } else {
            unit[i] = x[i];
        }
    }
    if spec.include_identity {
        for i in 0..7 {
            features.push(unit[i]);
            component.push(i as u8);
            derivative.push(scale[i]);
        }
    }
    for i in 0..7 {
        let mut freq = PI;
        for _ in 0..spec.bands(i) {
            let (s, c) = (freq * unit[i]).sin_cos();
            features.push(s);
            component.push(i as u8);
            derivative.push(freq * c * scale[i]);
            features.push(c);
            component.push(i as u8);
            derivative.push(-freq * s * scale[i]);
            freq *= 2.0;
        }
    }
    debug_assert_eq!(features.len(), width);
    Encoded {
        features,
        component,
        derivative,
    }
}

/// Encodes `x`: optional identity block of the normalized coordinates, then
/// `[sin(2^k π u), cos(2^k π u)]` for `k < L` per component. Positions are
/// first mapped into `[-1, 1]` by `bounds`; quaternion components are used as is.
pub fn encode_pose(spec: &PositionalEncodingSpec, bounds: &PositionBounds, x: &Pose) -> Vec<f64> {
    encode_with_derivative(spec, bounds, &x.to_array()).features
}
