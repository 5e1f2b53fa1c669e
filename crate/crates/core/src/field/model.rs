use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{encode_with_derivative, Encoded, PositionBounds, PositionalEncodingSpec};
use crate::error::{Error, Result};
use crate::geometry::{dot, quat_mul, Pose, UnitEmbedding};
use crate::vmf::KappaRange;

/// Dense layer `y = W x + b`, weights row-major `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl Linear {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Linear {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let w = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound) as f32)
            .collect();
        Linear {
            rows,
            cols,
            w,
            b: vec![0.0; rows],
        }
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.cols);
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r] as f64;
            for (w, x) in row.iter().zip(input) {
                acc += *w as f64 * x;
            }
            out.push(acc);
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and, when requested, the
    /// input gradient into `g_in`.
    fn backward(
        &self,
        input: &[f64],
        g_out: &[f64],
        grad: Option<&mut LinearGrad>,
        g_in: Option<&mut [f64]>,
    ) {
        if let Some(grad) = grad {
            for r in 0..self.rows {
                let g = g_out[r];
                if g == 0.0 {
                    continue;
                }
                grad.b[r] += g;
                let row = &mut grad.w[r * self.cols..(r + 1) * self.cols];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += g * x;
                }
            }
        }
        if let Some(g_in) = g_in {
            for r in 0..self.rows {
                let g = g_out[r];
                if g == 0.0 {
                    continue;
                }
                let row = &self.w[r * self.cols..(r + 1) * self.cols];
                for (gi, w) in g_in.iter_mut().zip(row) {
                    *gi += g * *w as f64;
                }
            }
        }
    }

    /// Pushes 7 tangent columns through the linear map (bias drops out).
    fn jvp(&self, t_in: &[[f64; 7]]) -> Vec<[f64; 7]> {
        (0..self.rows)
            .map(|r| {
                let row = &self.w[r * self.cols..(r + 1) * self.cols];
                let mut acc = [0.0; 7];
                for (w, t) in row.iter().zip(t_in) {
                    let w = *w as f64;
                    for k in 0..7 {
                        acc[k] += w * t[k];
                    }
                }
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Parameter gradients, one entry per layer in [`FieldModel::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LinearGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &FieldModel) -> Self {
        Gradients {
            layers: model
                .layers()
                .map(|l| LinearGrad {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.iter_mut().zip(&b.w).for_each(|(x, y)| *x += y);
            a.b.iter_mut().zip(&b.b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, f: f64) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x *= f);
            l.b.iter_mut().for_each(|x| *x *= f);
        }
    }
}

/// Trunk shape of the field network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldArchitecture {
    pub encoding: PositionalEncodingSpec,
    pub hidden: Vec<usize>,
    /// Hidden layer whose input is `[previous activation, encoded pose]`.
    pub skip: Option<usize>,
}

impl FieldArchitecture {
    /// Two hidden layers of width 64 with the encoded pose re-injected at the second.
    pub fn desk() -> Self {
        FieldArchitecture {
            encoding: PositionalEncodingSpec::default(),
            hidden: vec![64, 64],
            skip: Some(1),
        }
    }

    /// Eight layers of width 256, skip at layer 4.
    pub fn nerf() -> Self {
        FieldArchitecture {
            encoding: PositionalEncodingSpec {
                l_pos: 10,
                l_quat: 4,
                include_identity: true,
            },
            hidden: vec![256; 8],
            skip: Some(4),
        }
    }
}

impl Default for FieldArchitecture {
    fn default() -> Self {
        FieldArchitecture::nerf()
    }
}

/// Output of one field evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub mu: UnitEmbedding,
    pub kappa: f64,
}

/// The implicit language map: pose → (mean direction, concentration).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    pub(crate) encoding: PositionalEncodingSpec,
    pub(crate) bounds: PositionBounds,
    pub(crate) skip: Option<usize>,
    pub(crate) hidden: Vec<Linear>,
    pub(crate) mu_head: Linear,
    pub(crate) kappa_head: Linear,
    pub(crate) d: usize,
    pub(crate) kappa_range: KappaRange,
}

pub(crate) struct Trace {
    enc: Encoded,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    trunk: Vec<f64>,
    raw_norm: f64,
    pub mu: Vec<f64>,
    raw_kappa: f64,
    pub kappa: f64,
    kappa_clipped: bool,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl FieldModel {
    /// Randomly initialized model (He-uniform trunk, κ head biased to κ ≈ 2).
    pub fn new(
        arch: &FieldArchitecture,
        bounds: PositionBounds,
        d: usize,
        seed: u64,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "embedding dimension must be >= 2, got {d}"
            )));
        }
        bounds.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_w = arch.encoding.width();
        if enc_w == 0 {
            return Err(Error::InvalidArgument(
                "positional encoding has zero width".into(),
            ));
        }
        let mut hidden = Vec::with_capacity(arch.hidden.len());
        let mut prev = enc_w;
        for (j, &width) in arch.hidden.iter().enumerate() {
            if width == 0 {
                return Err(Error::InvalidArgument("hidden layer of width 0".into()));
            }
            let cols = if arch.skip == Some(j) {
                prev + enc_w
            } else {
                prev
            };
            hidden.push(Linear::uniform(
                width,
                cols,
                (6.0 / cols as f64).sqrt(),
                &mut rng,
            ));
            prev = width;
        }
        let mu_head = Linear::uniform(d, prev, (6.0 / (prev + d) as f64).sqrt(), &mut rng);
        let mut kappa_head = Linear::uniform(1, prev, 0.01 * (6.0 / prev as f64).sqrt(), &mut rng);
        let kappa_range = KappaRange::default();
        // softplus⁻¹(2 - κ_min)
        kappa_head.b[0] = ((2.0 - kappa_range.min).exp() - 1.0).ln() as f32;
        let model = FieldModel {
            encoding: arch.encoding,
            bounds,
            skip: arch.skip,
            hidden,
            mu_head,
            kappa_head,
            d,
            kappa_range,
        };
        model.validate()?;
        Ok(model)
    }

    /// Assembles a model from explicit layers, checking shapes.
    pub fn from_layers(
        encoding: PositionalEncodingSpec,
        bounds: PositionBounds,
        skip: Option<usize>,
        hidden: Vec<Linear>,
        mu_head: Linear,
        kappa_head: Linear,
    ) -> Result<Self> {
        let d = mu_head.rows;
        let m = FieldModel {
            encoding,
            bounds,
            skip,
            hidden,
            mu_head,
            kappa_head,
            d,
            kappa_range: KappaRange::default(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let corrupt = |m: String| Err(Error::ModelCorrupt(m));
        self.bounds.validate()?;
        let enc_w = self.encoding.width();
        let mut prev = enc_w;
        if let Some(s) = self.skip {
            if s == 0 || s >= self.hidden.len() {
                return corrupt(format!(
                    "skip layer {s} out of range for {} hidden layers",
                    self.hidden.len()
                ));
            }
        }
        for (j, l) in self.hidden.iter().enumerate() {
            let want = if self.skip == Some(j) {
                prev + enc_w
            } else {
                prev
            };
            if l.cols != want || l.rows == 0 {
                return corrupt(format!(
                    "hidden layer {j} is {}x{}, expected {}x{want}",
                    l.rows, l.cols, l.rows
                ));
            }
            prev = l.rows;
        }
        if self.mu_head.cols != prev || self.mu_head.rows != self.d || self.d < 2 {
            return corrupt(format!(
                "mu head is {}x{}, expected {}x{prev}",
                self.mu_head.rows, self.mu_head.cols, self.d
            ));
        }
        if self.kappa_head.cols != prev || self.kappa_head.rows != 1 {
            return corrupt(format!(
                "kappa head is {}x{}, expected 1x{prev}",
                self.kappa_head.rows, self.kappa_head.cols
            ));
        }
        for (i, l) in self.layers().enumerate() {
            if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
                return corrupt(format!("layer {i} buffer sizes do not match its shape"));
            }
            if l.w.iter().chain(&l.b).any(|v| !v.is_finite()) {
                return corrupt(format!("layer {i} has non-finite weights"));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn encoding(&self) -> &PositionalEncodingSpec {
        &self.encoding
    }

    pub fn bounds(&self) -> &PositionBounds {
        &self.bounds
    }

    pub fn skip(&self) -> Option<usize> {
        self.skip
    }

    pub fn kappa_range(&self) -> KappaRange {
        self.kappa_range
    }

    pub fn architecture(&self) -> FieldArchitecture {
        FieldArchitecture {
            encoding: self.encoding,
            hidden: self.hidden.iter().map(|l| l.rows).collect(),
            skip: self.skip,
        }
    }

    /// Hidden layers, then the μ head, then the κ head.
    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.hidden.iter().chain([&self.mu_head, &self.kappa_head])
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.hidden
            .iter_mut()
            .chain([&mut self.mu_head, &mut self.kappa_head])
    }

    pub fn hidden_layers_mut(&mut self) -> &mut [Linear] {
        &mut self.hidden
    }

    pub fn mu_head_mut(&mut self) -> &mut Linear {
        &mut self.mu_head
    }

    pub fn kappa_head_mut(&mut self) -> &mut Linear {
        &mut self.kappa_head
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub(crate) fn trace(&self, x: &[f64; 7]) -> Result<Trace> {
        let enc = encode_with_derivative(&self.encoding, &self.bounds, x);
        let mut inputs = Vec::with_capacity(self.hidden.len());
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut h = enc.features.clone();
        for (j, layer) in self.hidden.iter().enumerate() {
            let input = if self.skip == Some(j) {
                let mut v = h;
                v.extend_from_slice(&enc.features);
                v
            } else {
                h
            };
            let p = layer.forward(&input);
            h = p.iter().map(|v| v.max(0.0)).collect();
            inputs.push(input);
            pre.push(p);
        }
        let raw_mu = self.mu_head.forward(&h);
        let raw_norm = raw_mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(raw_norm > 0.0) || !raw_norm.is_finite() {
            return Err(Error::ModelCorrupt(format!(
                "mean head output has norm {raw_norm}"
            )));
        }
        let mu = raw_mu.iter().map(|v| v / raw_norm).collect();
        let raw_kappa = self.kappa_head.forward(&h)[0];
        if !raw_kappa.is_finite() {
            return Err(Error::ModelCorrupt(
                "concentration head output is not finite".into(),
            ));
        }
        let unclipped = self.kappa_range.min + softplus(raw_kappa);
        let kappa_clipped = unclipped > self.kappa_range.max;
        let kappa = unclipped.min(self.kappa_range.max);
        Ok(Trace {
            enc,
            inputs,
            pre,
            trunk: h,
            raw_norm,
            mu,
            raw_kappa,
            kappa,
            kappa_clipped,
        })
    }

    /// Backpropagates `∂L/∂μ` and `∂L/∂κ`. Parameter gradients are added to
    /// `grads` when given; the return value is `∂L/∂x` over the raw pose
    /// vector when `want_pose` is set, zeros otherwise.
    pub(crate) fn backward(
        &self,
        tr: &Trace,
        g_mu: &[f64],
        g_kappa: f64,
        mut grads: Option<&mut Gradients>,
        want_pose: bool,
    ) -> [f64; 7] {
        let n_hidden = self.hidden.len();
        let mu_dot_g = dot(&tr.mu, g_mu);
        let g_raw_mu: Vec<f64> = tr
            .mu
            .iter()
            .zip(g_mu)
            .map(|(m, g)| (g - m * mu_dot_g) / tr.raw_norm)
            .collect();
        let g_raw_kappa = if tr.kappa_clipped {
            0.0
        } else {
            g_kappa * sigmoid(tr.raw_kappa)
        };

        let mut g_h = vec![0.0; tr.trunk.len()];
        let (hidden_grads, head_grads) = match grads.as_deref_mut() {
            Some(g) => {
                let (a, b) = g.layers.split_at_mut(n_hidden);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        let (mu_grad, kappa_grad) = match head_grads {
            Some(b) => {
                let (m, k) = b.split_at_mut(1);
                (Some(&mut m[0]), Some(&mut k[0]))
            }
            None => (None, None),
        };
        self.mu_head
            .backward(&tr.trunk, &g_raw_mu, mu_grad, Some(&mut g_h));
        self.kappa_head
            .backward(&tr.trunk, &[g_raw_kappa], kappa_grad, Some(&mut g_h));

        let enc_w = tr.enc.features.len();
        let mut g_enc = vec![0.0; enc_w];
        let mut hidden_grads = hidden_grads;
        if n_hidden == 0 {
            g_enc.iter_mut().zip(&g_h).for_each(|(a, b)| *a += b);
        }
        for j in (0..n_hidden).rev() {
            let layer = &self.hidden[j];
            let g_pre: Vec<f64> = tr.pre[j]
                .iter()
                .zip(&g_h)
                .map(|(p, g)| if *p > 0.0 { *g } else { 0.0 })
                .collect();
            let need_input = j > 0 || want_pose;
            let mut g_in = if need_input {
                Some(vec![0.0; layer.cols])
            } else {
                None
            };
            let lg = hidden_grads.as_deref_mut().map(|g| &mut g[j]);
            layer.backward(&tr.inputs[j], &g_pre, lg, g_in.as_deref_mut());
            if let Some(g_in) = g_in {
                if j == 0 {
                    g_enc.iter_mut().zip(&g_in).for_each(|(a, b)| *a += b);
                    g_h = Vec::new();
                } else {
                    let prev_w = self.hidden[j - 1].rows;
                    if self.skip == Some(j) {
                        g_enc
                            .iter_mut()
                            .zip(&g_in[prev_w..])
                            .for_each(|(a, b)| *a += b);
                    }
                    g_h = g_in[..prev_w].to_vec();
                }
            }
        }

        let mut g_pose = [0.0; 7];
        if want_pose {
            for f in 0..enc_w {
                g_pose[tr.enc.component[f] as usize] += g_enc[f] * tr.enc.derivative[f];
            }
        }
        g_pose
    }

    /// Mean direction and concentration at pose `x`.
    pub fn forward(&self, x: &Pose) -> Result<FieldOutput> {
        self.forward_array(&x.to_array())
    }

    /// Evaluates the field at a raw 7-vector, which need not hold a unit quaternion.
    pub fn forward_array(&self, x: &[f64; 7]) -> Result<FieldOutput> {
        let tr = self.trace(x)?;
        Ok(FieldOutput {
            mu: UnitEmbedding::from_unit_unchecked(tr.mu),
            kappa: tr.kappa,
        })
    }

    /// `∇_x (μ(x)·z_goal)` over the raw 7-D pose vector.
    pub fn pose_gradient(&self, x: &Pose, z_goal: &UnitEmbedding) -> Result<[f64; 7]> {
        self.similarity_and_gradient(&x.to_array(), z_goal)
            .map(|(_, g)| g)
    }

    /// Similarity `μ(x)·z_goal` and its gradient at a raw 7-vector.
    pub fn similarity_and_gradient(
        &self,
        x: &[f64; 7],
        z_goal: &UnitEmbedding,
    ) -> Result<(f64, [f64; 7])> {
        if z_goal.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: z_goal.dim(),
            });
        }
        let tr = self.trace(x)?;
        let sim = dot(&tr.mu, z_goal.as_slice());
        let g = self.backward(&tr, z_goal.as_slice(), 0.0, None, true);
        Ok((sim, g))
    }

    /// `∂μ/∂x` as `d` rows of 7 columns, by forward-mode differentiation.
    pub fn jacobian(&self, x: &Pose) -> Result<Vec<[f64; 7]>> {
        let tr = self.trace(&x.to_array())?;
        let enc_t: Vec<[f64; 7]> = (0..tr.enc.features.len())
            .map(|f| {
                let mut t = [0.0; 7];
                t[tr.enc.component[f] as usize] = tr.enc.derivative[f];
                t
            })
            .collect();
        let mut t_h = enc_t.clone();
        for (j, layer) in self.hidden.iter().enumerate() {
            let t_in = if self.skip == Some(j) {
                let mut v = t_h;
                v.extend_from_slice(&enc_t);
                v
            } else {
                t_h
            };
            let t_pre = layer.jvp(&t_in);
            t_h = t_pre
                .into_iter()
                .zip(&tr.pre[j])
                .map(|(t, p)| if *p > 0.0 { t } else { [0.0; 7] })
                .collect();
        }
        let t_raw = self.mu_head.jvp(&t_h);
        let mut proj = [0.0; 7];
        for (m, t) in tr.mu.iter().zip(&t_raw) {
            for k in 0..7 {
                proj[k] += m * t[k];
            }
        }
        Ok(t_raw
            .iter()
            .zip(&tr.mu)
            .map(|(t, m)| std::array::from_fn(|k| (t[k] - m * proj[k]) / tr.raw_norm))
            .collect())
    }

    /// Frobenius norm of `∂μ/∂x`.
    pub fn jacobian_norm(&self, x: &Pose) -> Result<f64> {
        Ok(self
            .jacobian(x)?
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt())
    }

    /// Frobenius norm of `∂μ/∂(t_x, t_y, yaw)`, where yaw pre-multiplies the
    /// orientation by a rotation about world `+z`.
    pub fn planar_jacobian_norm(&self, x: &Pose) -> Result<f64> {
        let dq = quat_mul([0.0, 0.0, 0.0, 0.5], x.q());
        let sq: f64 = self
            .jacobian(x)?
            .iter()
            .map(|r| {
                r[0] * r[0] + r[1] * r[1] + (0..4).map(|k| r[3 + k] * dq[k]).sum::<f64>().powi(2)
            })
            .sum();
        Ok(sq.sqrt())
    }
}
