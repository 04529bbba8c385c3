//! Small convolutional encoder with four feature scales and a
//! multiplicative decoder.
//!
//! Encoder: a stride-2 3×3 stem, then four blocks of (3×3 conv, ReLU,
//! stride-2 1×1 conv). Block `i` emits `f_i` at `H/2^(i+1) × W/2^(i+1)`.
//!
//! Decoder: `f_2`, `f_3`, `f_4` each pass a 1×1 conv to a shared width, are
//! bilinearly resized to the resolution of `f_2`, multiplied elementwise,
//! projected to one channel by a final 1×1 conv and resized to `H×W`. `f_1`
//! is computed but the decoder never reads it. The output is raw logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tensor::{Real, Tape, Tensor, TensorError, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub stem_width: usize,
    pub channels: [usize; 4],
    /// Channel width every decoder scale is unified to.
    pub decoder_width: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { stem_width: 8, channels: [16, 32, 64, 128], decoder_width: 16, height: 96, width: 96 }
    }
}

impl EncoderConfig {
    pub fn with_size(height: usize, width: usize) -> Self {
        Self { height, width, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 32 != 0 || self.width % 32 != 0 {
            return Err(Error::Config(format!(
                "input size {}×{} must be a positive multiple of 32",
                self.height, self.width
            )));
        }
        if self.channels.contains(&0) || self.stem_width == 0 || self.decoder_width == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        Ok(())
    }

    /// Spatial size of encoder stage `i` (1-based).
    pub fn stage_size(&self, i: usize) -> (usize, usize) {
        (self.height >> (i + 1), self.width >> (i + 1))
    }

    /// Hex SHA-256 of the canonical JSON form; identifies the architecture.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Parameter names and shapes in their fixed order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.channels;
        let d = self.decoder_width;
        let mut out = vec![
            ("stem.weight".to_string(), vec![self.stem_width, 3, 3, 3]),
            ("stem.bias".to_string(), vec![self.stem_width]),
        ];
        let mut prev = self.stem_width;
        for (i, &ch) in c.iter().enumerate() {
            let s = i + 1;
            out.push((format!("stage{s}.conv.weight"), vec![ch, prev, 3, 3]));
            out.push((format!("stage{s}.conv.bias"), vec![ch]));
            out.push((format!("stage{s}.down.weight"), vec![ch, ch, 1, 1]));
            out.push((format!("stage{s}.down.bias"), vec![ch]));
            prev = ch;
        }
        for s in 2..=4 {
            out.push((format!("decoder.unify{s}.weight"), vec![d, c[s - 1], 1, 1]));
            out.push((format!("decoder.unify{s}.bias"), vec![d]));
        }
        out.push(("head.weight".to_string(), vec![1, d, 1, 1]));
        out.push(("head.bias".to_string(), vec![1]));
        out
    }
}

/// Learnable weights in a fixed, named order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ModelParams<T> {
    pub fn from_entries(entries: Vec<(String, Tensor<T>)>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor<T>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Records every tensor as a gradient-receiving leaf, in order.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Vec<Var<'t, T>> {
        self.entries.iter().map(|(_, t)| tape.param(t.clone())).collect()
    }

    /// Checks names and shapes against the layout `cfg` implies.
    pub fn check_layout(&self, cfg: &EncoderConfig) -> Result<()> {
        let expected = cfg.param_shapes();
        if expected.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                self.entries.len()
            )));
        }
        for ((name, shape), (have, t)) in expected.iter().zip(&self.entries) {
            if name != have || shape.as_slice() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {have} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Whether the conv named `name` feeds a ReLU.
fn feeds_relu(name: &str) -> bool {
    name.starts_with("stem.") || name.ends_with(".conv.weight")
}

/// He-style uniform init. Weights are drawn from `±sqrt(3·gain / fan_in)`
/// with gain 2 ahead of a ReLU and 1 elsewhere, so every layer roughly
/// preserves the second moment of its input. Biases are zero except on the
/// decoder's unification convs, which start at 1: each factor of the
/// elementwise product is then `1 + signal` and the product starts out
/// close to a sum of the three scales instead of vanishing.
pub fn init_params<T: Real>(cfg: &EncoderConfig, seed: u64) -> ModelParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = cfg
        .param_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let t = if shape.len() == 4 {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let gain = if feeds_relu(&name) { 2.0 } else { 1.0 };
                let bound = (3.0 * gain / fan_in).sqrt();
                Tensor::from_fn(shape, |_| T::of(rng.random_range(-bound..bound)))
            } else if name.starts_with("decoder.") {
                Tensor::from_fn(shape, |_| T::one())
            } else {
                Tensor::zeros(shape)
            };
            (name, t)
        })
        .collect();
    ModelParams { entries }
}

/// Outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward<'t, T: Real> {
    /// `H×W` logits.
    pub logits: Var<'t, T>,
    /// Encoder outputs `f_1..f_4`.
    pub features: [Var<'t, T>; 4],
}

/// Runs the network on a `3×H×W` image. `params` must come from
/// [`ModelParams::bind`] on the same tape.
pub fn forward<'t, T: Real>(
    cfg: &EncoderConfig,
    params: &[Var<'t, T>],
    image: Var<'t, T>,
) -> Result<Forward<'t, T>> {
    let shape = image.shape();
    if shape != [3, cfg.height, cfg.width] {
        return Err(TensorError::ShapeMismatch { left: shape, right: vec![3, cfg.height, cfg.width] }
            .into());
    }
    let mut p = params.iter().copied();
    let mut next = || p.next().ok_or_else(|| Error::Config("too few parameters".into()));

    let (w, b) = (next()?, next()?);
    let mut x = image.conv2d(w, Some(b), 2, 1)?.relu();
    let mut features = Vec::with_capacity(4);
    for _ in 0..4 {
        let (w, b) = (next()?, next()?);
        x = x.conv2d(w, Some(b), 1, 1)?.relu();
        let (w, b) = (next()?, next()?);
        x = x.conv2d(w, Some(b), 2, 0)?;
        features.push(x);
    }

    let (h2, w2) = cfg.stage_size(2);
    let mut fused: Option<Var<'t, T>> = None;
    for f in &features[1..] {
        let (w, b) = (next()?, next()?);
        let mut u = f.conv2d(w, Some(b), 1, 0)?;
        if u.shape()[1..] != [h2, w2] {
            u = u.upsample_bilinear(h2, w2)?;
        }
        fused = Some(match fused {
            None => u,
            Some(acc) => acc.mul(u)?,
        });
    }
    let (w, b) = (next()?, next()?);
    let head = fused.expect("three decoder scales").conv2d(w, Some(b), 1, 0)?;
    let logits = head.upsample_bilinear(cfg.height, cfg.width)?.reshape(vec![cfg.height, cfg.width])?;
    Ok(Forward { logits, features: [features[0], features[1], features[2], features[3]] })
}

/// Forward pass without gradient tracking; returns `H×W` logits.
pub fn predict_logits<T: Real>(
    cfg: &EncoderConfig,
    params: &ModelParams<T>,
    image: &Tensor<T>,
) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let vars: Vec<_> = params.tensors().map(|t| tape.constant(t.clone())).collect();
    let x = tape.constant(image.clone());
    let out = forward(cfg, &vars, x)?;
    Ok((*out.logits.value()).clone())
}
