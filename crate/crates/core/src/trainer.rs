//! Triplet training loop, SGD with momentum, and the loss ablation runner.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::data::{augment, Annotation, AnnotationKind, Sample, Split};
use crate::eval::{evaluate, EvalReport};
use crate::losses::{
    fuse_tensors, linear_fuse, loss_lr, loss_pixel, loss_scribble, loss_sp, loss_total,
    FusionSpec, LossBreakdown, LossParts, Normalize, Toggles,
};
use crate::segnet::{forward, init_params, EncoderConfig, ModelParams};
use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    #[default]
    Fixed,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// `lr · (1 − t/T)^poly_power`.
    #[default]
    Poly,
}

/// Hyperparameters of one run. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Triplets per optimizer step.
    pub batch_size: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub lambda_mode: LambdaMode,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub toggle_sp: bool,
    pub toggle_bme: bool,
    pub toggle_lr: bool,
    pub seed: u64,
    /// Evaluate and checkpoint every this many iterations; 0 means only at
    /// the end.
    pub eval_interval: usize,
    /// Reduction of the BCE inside the box projection loss.
    pub sp_normalize: Normalize,
    pub lr_schedule: LrSchedule,
    pub poly_power: f64,
    pub augment: bool,
    /// Rescale the batch gradient to at most this global L2 norm; 0 disables.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            momentum: 0.9,
            batch_size: 4,
            iterations: 3000,
            lambda: 0.5,
            lambda_mode: LambdaMode::Fixed,
            lambda_lo: 0.3,
            lambda_hi: 0.7,
            toggle_sp: true,
            toggle_bme: true,
            toggle_lr: true,
            seed: 0,
            eval_interval: 500,
            sp_normalize: Normalize::Mean,
            lr_schedule: LrSchedule::Poly,
            poly_power: 0.9,
            augment: true,
            grad_clip: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.poly_power.is_finite() && self.poly_power > 0.0) {
            return bad(format!("poly_power must be positive, got {}", self.poly_power));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return bad(format!("grad_clip must be non-negative, got {}", self.grad_clip));
        }
        self.fusion().validate()
    }

    pub fn toggles(&self) -> Toggles {
        Toggles { sp: self.toggle_sp, bme: self.toggle_bme, lr: self.toggle_lr }
    }

    pub fn with_toggles(&self, t: Toggles) -> Self {
        Self { toggle_sp: t.sp, toggle_bme: t.bme, toggle_lr: t.lr, ..self.clone() }
    }

    pub fn fusion(&self) -> FusionSpec {
        match self.lambda_mode {
            LambdaMode::Fixed => FusionSpec::Fixed { lambda: self.lambda },
            LambdaMode::Uniform => FusionSpec::Uniform { lo: self.lambda_lo, hi: self.lambda_hi },
        }
    }

    /// Parses `key = value` lines over the defaults. Blank lines and text
    /// after `#` are ignored; keys are the field names.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual form. Booleans accept `on`/`off`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map = match serde_json::to_value(&*self) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {value:?}"));
        let parsed = match map.get(key) {
            None => return Err(Error::Config(format!("unknown config key {key:?}"))),
            Some(serde_json::Value::Bool(_)) => serde_json::Value::Bool(match value {
                "true" | "on" => true,
                "false" | "off" => false,
                _ => return Err(bad("true/false or on/off")),
            }),
            Some(serde_json::Value::Number(n)) if n.is_u64() => {
                serde_json::Value::from(value.parse::<u64>().map_err(|_| bad("a non-negative integer"))?)
            }
            Some(serde_json::Value::Number(_)) => {
                let v: f64 = value.parse().map_err(|_| bad("a number"))?;
                serde_json::Number::from_f64(v).map(serde_json::Value::Number).ok_or_else(|| bad("a finite number"))?
            }
            Some(_) => serde_json::Value::String(value.trim_matches('"').to_string()),
        };
        map.insert(key.to_string(), parsed);
        *self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Learning rate for 0-based iteration `t`.
    pub fn lr_at(&self, t: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Poly => {
                let frac = 1.0 - t as f64 / self.iterations as f64;
                self.learning_rate * frac.max(0.0).powf(self.poly_power)
            }
        }
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Hash with the loss toggles cleared: equal for configs that differ
    /// only in which terms are enabled.
    pub fn hash_without_toggles(&self) -> String {
        self.with_toggles(Toggles::BASELINE).hash()
    }
}

/// `v ← μ·v + g; p ← p − lr·v` for every tensor. Nothing is modified if any
/// gradient is non-finite.
pub fn sgd_momentum_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &[Tensor<T>],
    velocity: &mut [Tensor<T>],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if grads.len() != params.len() || velocity.len() != params.len() {
        return Err(Error::Config(format!(
            "{} parameters, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for (((name, p), g), v) in params.entries().iter().zip(grads).zip(velocity.iter()) {
        p.check_same_shape(g)?;
        p.check_same_shape(v)?;
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    let (lr, mu) = (T::of(lr), T::of(momentum));
    for ((p, g), v) in params.tensors_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = mu * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before scaling. Non-finite norms are left alone for
/// the optimizer to report.
pub fn clip_grad_norm<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm.is_finite() && norm > max_norm {
        let scale = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// One sample from each stream. The weak slots may be empty when no
/// enabled term needs them.
#[derive(Clone, Copy, Debug)]
pub struct Triplet<'a> {
    pub pixel: &'a Sample,
    pub boxed: Option<&'a Sample>,
    pub scribble: Option<&'a Sample>,
}

impl<'a> Triplet<'a> {
    fn check(&self, toggles: Toggles) -> Result<()> {
        let expect = |s: Option<&Sample>, kind: AnnotationKind, needed: bool| -> Result<()> {
            match s {
                Some(s) if s.kind() != kind => Err(Error::Config(format!(
                    "sample {} in the {kind} slot has a {} annotation",
                    s.id,
                    s.kind()
                ))),
                None if needed => Err(Error::Config(format!("triplet lacks a {kind} sample"))),
                _ => Ok(()),
            }
        };
        expect(Some(self.pixel), AnnotationKind::Pixel, true)?;
        expect(self.boxed, AnnotationKind::Box, toggles.sp || toggles.lr)?;
        expect(self.scribble, AnnotationKind::Scribble, toggles.bme || toggles.lr)
    }
}

/// Options shared by every triplet of a step.
#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    pub toggles: Toggles,
    pub lambda: f64,
    pub sp_normalize: Normalize,
}

/// Builds the loss graph of one triplet on `tape`. Disabled branches are
/// never constructed.
pub fn triplet_loss<'t, T: Real>(
    tape: &'t Tape<T>,
    enc: &EncoderConfig,
    params: &[Var<'t, T>],
    triplet: &Triplet<'_>,
    opts: &StepOptions,
) -> Result<(Var<'t, T>, LossBreakdown)> {
    triplet.check(opts.toggles)?;
    let t = opts.toggles;
    let predict = |img: &Tensor<T>| -> Result<Var<'t, T>> {
        Ok(forward(enc, params, tape.constant(img.clone()))?.logits.sigmoid())
    };

    let img_p: Tensor<T> = triplet.pixel.image.cast();
    let y_p = predict(&img_p)?;
    let Annotation::Pixel(mask) = &triplet.pixel.annotation else { unreachable!() };
    let pixel = loss_pixel(y_p, tape.constant(mask.to_tensor()))?;

    let weak = |s: Option<&Sample>, needed: bool| -> Result<Option<(Tensor<T>, Var<'t, T>)>> {
        match s {
            Some(s) if needed => {
                let img: Tensor<T> = s.image.cast();
                let y = predict(&img)?;
                Ok(Some((img, y)))
            }
            _ => Ok(None),
        }
    };
    let boxed = weak(triplet.boxed, t.sp || t.lr)?;
    let scrib = weak(triplet.scribble, t.bme || t.lr)?;

    let mut parts = LossParts { pixel, sp: None, scribble: None, lr: None };
    if t.sp {
        let (Some((_, y_b)), Some(Annotation::Box(b))) = (&boxed, triplet.boxed.map(|s| &s.annotation)) else {
            unreachable!()
        };
        parts.sp = Some(loss_sp(*y_b, b, opts.sp_normalize)?);
    }
    if t.bme {
        let (Some((_, y_s)), Some(Annotation::Scribble(sc))) =
            (&scrib, triplet.scribble.map(|s| &s.annotation))
        else {
            unreachable!()
        };
        parts.scribble = Some(loss_scribble(*y_s, sc)?);
    }
    if t.lr {
        let hybrid = |img_h: &Tensor<T>, y_h: Var<'t, T>| -> Result<Var<'t, T>> {
            let y_ph = predict(&fuse_tensors(&img_p, img_h, opts.lambda)?)?;
            let m_ph = linear_fuse(y_p, y_h, opts.lambda)?;
            loss_lr(y_ph, m_ph)
        };
        let (Some((img_b, y_b)), Some((img_s, y_s))) = (&boxed, &scrib) else { unreachable!() };
        let l_pb = hybrid(img_b, *y_b)?;
        let l_ps = hybrid(img_s, *y_s)?;
        parts.lr = Some(l_pb.add(l_ps)?.mul_scalar(0.5));
    }
    loss_total(&parts, t)
}

/// Batch-mean gradients of the total loss with respect to every parameter,
/// and the batch-mean breakdown.
pub fn batch_gradients<T: Real>(
    enc: &EncoderConfig,
    params: &ModelParams<T>,
    triplets: &[Triplet<'_>],
    opts: &StepOptions,
) -> Result<(Vec<Tensor<T>>, LossBreakdown)> {
    if triplets.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    for t in triplets {
        t.check(opts.toggles)?;
    }
    let mut acc: Vec<Tensor<T>> = params.tensors().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    let mut sums = [0.0f64; 4];
    for triplet in triplets {
        let tape = Tape::new();
        let vars = params.bind(&tape);
        let (total, b) = triplet_loss(&tape, enc, &vars, triplet, opts)?;
        let grads = tape.backward(total)?;
        for (a, v) in acc.iter_mut().zip(&vars) {
            if let Some(g) = grads.get(*v) {
                for (x, &y) in a.data_mut().iter_mut().zip(g.data()) {
                    *x += y;
                }
            }
        }
        for (s, v) in sums.iter_mut().zip([b.l_pixel, b.l_sp, b.l_scribble, b.l_lr]) {
            *s += v;
        }
    }
    let n = triplets.len() as f64;
    let scale = T::of(1.0 / n);
    for a in &mut acc {
        a.data_mut().iter_mut().for_each(|x| *x *= scale);
    }
    let b = LossBreakdown::from_parts(sums[0] / n, sums[1] / n, sums[2] / n, sums[3] / n);
    Ok((acc, b))
}

/// A stream of sample indices that cycles through a shuffled order and
/// reshuffles at each epoch boundary, with its own random stream.
#[derive(Clone, Debug)]
struct Stream {
    members: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StreamState {
    order: Vec<usize>,
    cursor: usize,
    /// ChaCha word position as a decimal string (it is a u128).
    word_pos: String,
}

fn stream_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn parse_word_pos(s: &str) -> Result<u128> {
    s.parse().map_err(|_| Error::Config(format!("bad rng position {s:?} in train state")))
}

impl Stream {
    fn new(members: Vec<usize>, seed: u64, id: u64) -> Self {
        let mut rng = stream_rng(seed, id);
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(&mut rng);
        Self { members, order, cursor: 0, rng }
    }

    fn next(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let i = self.members[self.order[self.cursor]];
        self.cursor += 1;
        i
    }

    fn state(&self) -> StreamState {
        StreamState {
            order: self.order.clone(),
            cursor: self.cursor,
            word_pos: self.rng.get_word_pos().to_string(),
        }
    }

    fn restore(&mut self, s: &StreamState) -> Result<()> {
        let mut sorted = s.order.clone();
        sorted.sort_unstable();
        if sorted != (0..self.members.len()).collect::<Vec<_>>() || s.cursor > s.order.len() {
            return Err(Error::Config("train state does not match the corpus".into()));
        }
        self.order = s.order.clone();
        self.cursor = s.cursor;
        self.rng.set_word_pos(parse_word_pos(&s.word_pos)?);
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainState {
    config_hash: String,
    streams: Vec<StreamState>,
    fusion_word_pos: String,
}

const PIXEL_STREAM: u64 = 0;
const BOX_STREAM: u64 = 1;
const SCRIBBLE_STREAM: u64 = 2;
const FUSION_STREAM: u64 = 3;

/// Optimizer state plus the three sample streams of one run.
pub struct Trainer<'c> {
    cfg: TrainConfig,
    enc: EncoderConfig,
    corpus: &'c [Sample],
    streams: [Stream; 3],
    fusion_rng: ChaCha8Rng,
    params: ModelParams<f32>,
    velocity: Vec<Tensor<f32>>,
    iteration: usize,
}

/// Encoder layout for a corpus whose images all share one size.
pub fn encoder_for(corpus: &[Sample]) -> Result<EncoderConfig> {
    let first = corpus.first().ok_or_else(|| Error::Config("corpus is empty".into()))?;
    let (h, w) = (first.height(), first.width());
    if let Some(s) = corpus.iter().find(|s| (s.height(), s.width()) != (h, w)) {
        return Err(Error::Config(format!(
            "sample {} is {}×{}, expected {h}×{w}",
            s.id,
            s.height(),
            s.width()
        )));
    }
    let enc = EncoderConfig::with_size(h, w);
    enc.validate()?;
    Ok(enc)
}

impl<'c> Trainer<'c> {
    pub fn new(corpus: &'c [Sample], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let enc = encoder_for(corpus)?;
        let members = |kind: AnnotationKind| -> Result<Vec<usize>> {
            let m: Vec<usize> = corpus
                .iter()
                .enumerate()
                .filter(|(_, s)| s.split == Split::Train && s.kind() == kind)
                .map(|(i, _)| i)
                .collect();
            if m.is_empty() {
                return Err(Error::Config(format!("corpus has no {kind}-annotated training samples")));
            }
            Ok(m)
        };
        let streams = [
            Stream::new(members(AnnotationKind::Pixel)?, cfg.seed, PIXEL_STREAM),
            Stream::new(members(AnnotationKind::Box)?, cfg.seed, BOX_STREAM),
            Stream::new(members(AnnotationKind::Scribble)?, cfg.seed, SCRIBBLE_STREAM),
        ];
        let params = init_params(&enc, cfg.seed);
        let velocity = params.tensors().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        Ok(Self {
            cfg: cfg.clone(),
            enc,
            corpus,
            streams,
            fusion_rng: stream_rng(cfg.seed, FUSION_STREAM),
            params,
            velocity,
            iteration: 0,
        })
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`]
    /// under the same config and corpus.
    pub fn resume(corpus: &'c [Sample], cfg: &TrainConfig, ck: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(corpus, cfg)?;
        ck.check_config(&t.enc)?;
        let state: TrainState = ck
            .train_state
            .clone()
            .ok_or_else(|| Error::Config("checkpoint carries no train state".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| Error::Config(e.to_string())))?;
        if state.config_hash != cfg.hash() {
            return Err(Error::Config("checkpoint was written under a different train config".into()));
        }
        if state.streams.len() != 3 || ck.velocity.len() != ck.params.len() {
            return Err(Error::Config("incomplete train state in checkpoint".into()));
        }
        for (s, st) in t.streams.iter_mut().zip(&state.streams) {
            s.restore(st)?;
        }
        t.fusion_rng.set_word_pos(parse_word_pos(&state.fusion_word_pos)?);
        t.params = ck.params.clone();
        t.velocity = ck.velocity.clone();
        t.iteration = ck.iteration;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let state = TrainState {
            config_hash: self.cfg.hash(),
            streams: self.streams.iter().map(Stream::state).collect(),
            fusion_word_pos: self.fusion_rng.get_word_pos().to_string(),
        };
        Checkpoint {
            encoder: self.enc.clone(),
            iteration: self.iteration,
            params: self.params.clone(),
            velocity: self.velocity.clone(),
            train_state: Some(serde_json::to_value(state).expect("state serializes")),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.enc
    }

    fn draw(&mut self, stream: usize) -> Sample {
        let s = &mut self.streams[stream];
        let i = s.next();
        if self.cfg.augment {
            augment(&self.corpus[i], &mut s.rng)
        } else {
            self.corpus[i].clone()
        }
    }

    /// One optimizer step over `batch_size` freshly drawn triplets.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let toggles = self.cfg.toggles();
        let lambda = self.cfg.fusion().sample(&mut self.fusion_rng);
        let mut drawn = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let p = self.draw(0);
            let b = (toggles.sp || toggles.lr).then(|| self.draw(1));
            let s = (toggles.bme || toggles.lr).then(|| self.draw(2));
            drawn.push((p, b, s));
        }
        let triplets: Vec<Triplet<'_>> = drawn
            .iter()
            .map(|(p, b, s)| Triplet { pixel: p, boxed: b.as_ref(), scribble: s.as_ref() })
            .collect();
        let opts = StepOptions { toggles, lambda, sp_normalize: self.cfg.sp_normalize };
        let (mut grads, breakdown) = batch_gradients(&self.enc, &self.params, &triplets, &opts)?;
        if !breakdown.l_total.is_finite() {
            return Err(Error::NonFiniteLoss(self.iteration + 1));
        }
        if self.cfg.grad_clip > 0.0 {
            clip_grad_norm(&mut grads, self.cfg.grad_clip);
        }
        let lr = self.cfg.lr_at(self.iteration);
        sgd_momentum_step(&mut self.params, &grads, &mut self.velocity, lr, self.cfg.momentum)?;
        self.iteration += 1;
        Ok(breakdown)
    }

    /// Scores the current weights on the test split.
    pub fn evaluate(&self) -> Result<EvalReport> {
        evaluate(&self.enc, &self.params, &test_sets(self.corpus))
    }
}

/// The test split as a single named set.
pub fn test_sets(corpus: &[Sample]) -> Vec<(String, Vec<&Sample>)> {
    vec![("test".to_string(), corpus.iter().filter(|s| s.split == Split::Test).collect())]
}

pub const LOSSES_FILE: &str = "losses.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug)]
pub struct TrainSummary {
    pub params: ModelParams<f32>,
    pub losses: Vec<LossBreakdown>,
    pub evals: Vec<(usize, EvalReport)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Config(format!("{}: {e}", path.display()))
}

/// Runs a full training job, writing `losses.csv`, `eval.csv`, a checkpoint
/// per eval interval under `checkpoints/` and the final one under
/// `checkpoint/`. With `resume`, training continues from that checkpoint
/// and the CSVs hold only the remaining iterations.
pub fn train(
    corpus: &[Sample],
    cfg: &TrainConfig,
    out: &Path,
    resume: Option<&Checkpoint>,
) -> Result<TrainSummary> {
    let mut trainer = match resume {
        Some(ck) => Trainer::resume(corpus, cfg, ck)?,
        None => Trainer::new(corpus, cfg)?,
    };
    if test_sets(corpus)[0].1.is_empty() {
        return Err(Error::Config("corpus has no test samples".into()));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
        let path = out.join(name);
        let mut f = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(f, "{header}").map_err(io_err(&path))?;
        Ok(f)
    };
    let mut losses_csv = open(LOSSES_FILE, LossBreakdown::CSV_HEADER)?;
    let mut eval_csv = open(EVAL_FILE, EvalReport::CSV_HEADER)?;
    let lpath = out.join(LOSSES_FILE);
    let epath = out.join(EVAL_FILE);

    let mut losses = Vec::new();
    let mut evals = Vec::new();
    while trainer.iteration() < cfg.iterations {
        let b = trainer.step()?;
        let it = trainer.iteration();
        writeln!(losses_csv, "{}", b.csv_row(it)).map_err(io_err(&lpath))?;
        losses.push(b);
        let at_interval = cfg.eval_interval > 0 && it % cfg.eval_interval == 0;
        if at_interval || it == cfg.iterations {
            let report = trainer.evaluate()?;
            for row in report.csv_rows(it) {
                writeln!(eval_csv, "{row}").map_err(io_err(&epath))?;
            }
            evals.push((it, report));
            let ck = trainer.checkpoint();
            if at_interval {
                ck.save(&out.join("checkpoints").join(format!("iter-{it:06}")))?;
            }
            if it == cfg.iterations {
                ck.save(&out.join(CHECKPOINT_DIR))?;
            }
        }
    }
    losses_csv.flush().map_err(io_err(&lpath))?;
    eval_csv.flush().map_err(io_err(&epath))?;
    Ok(TrainSummary { params: trainer.params().clone(), losses, evals })
}

/// One row of the ablation table: one toggle combination over all seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub toggles: Toggles,
    pub seeds: Vec<u64>,
    pub dice: Vec<f64>,
    pub iou: Vec<f64>,
    /// Hash of the config with toggles cleared; identical across rows.
    pub base_hash: String,
}

impl AblationRow {
    pub fn mean_dice(&self) -> f64 {
        self.dice.iter().sum::<f64>() / self.dice.len() as f64
    }

    pub fn mean_iou(&self) -> f64 {
        self.iou.iter().sum::<f64>() / self.iou.len() as f64
    }
}

pub const ABLATION_HEADER: &str = "row,label,toggle_sp,toggle_bme,toggle_lr,mean_dice,mean_iou,dice_per_seed,base_hash";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for (k, r) in rows.iter().enumerate() {
        let per_seed: Vec<String> = r.dice.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            k + 1,
            r.toggles.label(),
            r.toggles.sp,
            r.toggles.bme,
            r.toggles.lr,
            r.mean_dice(),
            r.mean_iou(),
            per_seed.join(";"),
            r.base_hash
        ));
    }
    out
}

/// Outcome of one ablation run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub toggles: Toggles,
    pub seed: u64,
    pub dice: f64,
    pub iou: f64,
    /// Mean `l_pixel` over the first and last 100 iterations (or fewer).
    pub pixel_first: f64,
    pub pixel_last: f64,
    pub seconds: f64,
}

impl RunSummary {
    pub fn line(&self) -> String {
        format!(
            "{} seed {}: dice {:.4} iou {:.4} l_pixel {:.4} -> {:.4} ({:.1}s)",
            self.toggles.label(),
            self.seed,
            self.dice,
            self.iou,
            self.pixel_first,
            self.pixel_last,
            self.seconds
        )
    }
}

/// Trains every ablation row for every seed from the same base config and
/// scores the final weights on the test split. `progress` sees each run as
/// it finishes.
pub fn ablate(
    corpus: &[Sample],
    base: &TrainConfig,
    seeds: &[u64],
    mut progress: impl FnMut(&RunSummary),
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(Toggles::ABLATION.len());
    for toggles in Toggles::ABLATION {
        let mut row = AblationRow {
            toggles,
            seeds: seeds.to_vec(),
            dice: Vec::new(),
            iou: Vec::new(),
            base_hash: String::new(),
        };
        for &seed in seeds {
            let cfg = TrainConfig { seed, ..base.with_toggles(toggles) };
            row.base_hash = TrainConfig { seed: base.seed, ..cfg.clone() }.hash_without_toggles();
            let start = std::time::Instant::now();
            let mut trainer = Trainer::new(corpus, &cfg)?;
            let mut pixel = Vec::with_capacity(cfg.iterations);
            while trainer.iteration() < cfg.iterations {
                pixel.push(trainer.step()?.l_pixel);
            }
            let report = trainer.evaluate()?;
            let window = pixel.len().clamp(1, 100);
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            progress(&RunSummary {
                toggles,
                seed,
                dice: report.wavg_dice,
                iou: report.wavg_iou,
                pixel_first: mean(&pixel[..window.min(pixel.len())]),
                pixel_last: mean(&pixel[pixel.len().saturating_sub(window)..]),
                seconds: start.elapsed().as_secs_f64(),
            });
            row.dice.push(report.wavg_dice);
            row.iou.push(report.wavg_iou);
        }
        rows.push(row);
    }
    Ok(rows)
}
