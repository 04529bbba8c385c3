//! The supervision losses as differentiable graphs over [`Var`]s.
//!
//! All functions take probabilities (post-sigmoid), not logits. Every log
//! is clamped at [`LOG_EPS`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BoxAnnotation, DataError, ScribbleAnnotation, ScribbleLabel};
use crate::tensor::{Axis, Real, Tensor, TensorError, Var, LOG_EPS};
use crate::{Error, Result};

/// Reduction applied to a per-pixel loss map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    Sum,
    Mean,
}

fn reduce<'t, T: Real>(v: Var<'t, T>, norm: Normalize) -> Var<'t, T> {
    match norm {
        Normalize::Sum => v.sum(),
        Normalize::Mean => v.mean(),
    }
}

/// `−[m·log y + (1−m)·log(1−y)]` per element.
pub fn bce_map<'t, T: Real>(y: Var<'t, T>, m: Var<'t, T>) -> Result<Var<'t, T>> {
    let pos = m.mul(y.safe_log(LOG_EPS))?;
    let neg = m.rsub_scalar(1.0).mul(y.rsub_scalar(1.0).safe_log(LOG_EPS))?;
    Ok(pos.add(neg)?.neg())
}

pub fn loss_bce<'t, T: Real>(y: Var<'t, T>, m: Var<'t, T>, norm: Normalize) -> Result<Var<'t, T>> {
    Ok(reduce(bce_map(y, m)?, norm))
}

/// Soft Dice loss `1 − 2Σmy / Σ(m+y)`. When `Σ(m+y)` is exactly zero,
/// one is added to numerator and denominator so the loss is 0.
pub fn loss_dice<'t, T: Real>(y: Var<'t, T>, m: Var<'t, T>) -> Result<Var<'t, T>> {
    let inter = y.mul(m)?.sum().mul_scalar(2.0);
    let denom = y.sum().add(m.sum())?;
    let ratio = if denom.item()? == T::zero() {
        inter.add_scalar(1.0).div(denom.add_scalar(1.0))?
    } else {
        inter.div(denom)?
    };
    Ok(ratio.rsub_scalar(1.0))
}

/// Pixel-supervised term: mean BCE plus Dice.
pub fn loss_pixel<'t, T: Real>(y: Var<'t, T>, m: Var<'t, T>) -> Result<Var<'t, T>> {
    loss_bce(y, m, Normalize::Mean)?.add(loss_dice(y, m)?).map_err(Into::into)
}

/// Per-axis max projections of `y` (`1×W` over rows, `H×1` over columns).
pub fn project_axis<'t, T: Real>(y: Var<'t, T>) -> Result<(Var<'t, T>, Var<'t, T>)> {
    Ok((y.axis_max(Axis::Rows)?, y.axis_max(Axis::Cols)?))
}

/// Projections of a box: the column indicator `1×W` and row indicator `H×1`.
pub fn box_projections<T: Real>(b: &BoxAnnotation, height: usize, width: usize) -> (Tensor<T>, Tensor<T>) {
    let ind = |lo: usize, hi: usize| move |i: usize| if (lo..=hi).contains(&i) { T::one() } else { T::zero() };
    (
        Tensor::from_fn(vec![1, width], ind(b.x0, b.x1)),
        Tensor::from_fn(vec![height, 1], ind(b.y0, b.y1)),
    )
}

pub struct Projections<'t, T: Real> {
    pub y_w: Var<'t, T>,
    pub y_h: Var<'t, T>,
    pub m_w: Var<'t, T>,
    pub m_h: Var<'t, T>,
}

pub fn project_pair<'t, T: Real>(y: Var<'t, T>, b: &BoxAnnotation) -> Result<Projections<'t, T>> {
    let shape = y.shape();
    if shape.len() != 2 {
        return Err(TensorError::Rank { expected: 2, shape }.into());
    }
    let (h, w) = (shape[0], shape[1]);
    if !b.fits(w, h) {
        return Err(DataError::BoxOutOfBounds { bbox: *b, width: w, height: h }.into());
    }
    let (y_w, y_h) = project_axis(y)?;
    let (m_w, m_h) = box_projections::<T>(b, h, w);
    let tape = y.tape();
    Ok(Projections { y_w, y_h, m_w: tape.constant(m_w), m_h: tape.constant(m_h) })
}

/// Box supervision on projections:
/// `0.5·[BCE(y_w,m_w) + BCE(y_h,m_h)] + 0.5·[Dice(y_w,m_w) + Dice(y_h,m_h)]`.
pub fn loss_sp<'t, T: Real>(y: Var<'t, T>, b: &BoxAnnotation, norm: Normalize) -> Result<Var<'t, T>> {
    let p = project_pair(y, b)?;
    let bce = loss_bce(p.y_w, p.m_w, norm)?.add(loss_bce(p.y_h, p.m_h, norm)?)?;
    let dice = loss_dice(p.y_w, p.m_w)?.add(loss_dice(p.y_h, p.m_h)?)?;
    Ok(bce.add(dice)?.mul_scalar(0.5))
}

/// `min(−log y, −log(1−y))` per element; the first branch wins at `y = 0.5`.
pub fn loss_bme<'t, T: Real>(y: Var<'t, T>) -> Result<Var<'t, T>> {
    let fg = y.safe_log(LOG_EPS).neg();
    let bg = y.rsub_scalar(1.0).safe_log(LOG_EPS).neg();
    Ok(fg.min(bg)?)
}

/// `(Σ_U BME + Σ_S BCE) / (|U| + |S|)` over an `H×W` probability map.
pub fn loss_scribble<'t, T: Real>(y: Var<'t, T>, s: &ScribbleAnnotation) -> Result<Var<'t, T>> {
    let shape = y.shape();
    if shape != [s.height(), s.width()] {
        return Err(TensorError::ShapeMismatch { left: shape, right: vec![s.height(), s.width()] }.into());
    }
    if s.labeled_count() == 0 {
        return Err(Error::Config("scribble annotation labels no pixel".into()));
    }
    let labels = s.labels();
    let ind = |f: fn(ScribbleLabel) -> bool| {
        Tensor::from_fn(shape.clone(), |i| if f(labels[i]) { T::one() } else { T::zero() })
    };
    let tape = y.tape();
    let unlabeled = tape.constant(ind(|l| l == ScribbleLabel::Unlabeled));
    let labeled = tape.constant(ind(|l| l != ScribbleLabel::Unlabeled));
    let target = tape.constant(ind(|l| l == ScribbleLabel::Foreground));

    let u_term = loss_bme(y)?.mul(unlabeled)?.sum();
    let s_term = bce_map(y, target)?.mul(labeled)?.sum();
    Ok(u_term.add(s_term)?.div_scalar(labels.len() as f64))
}

/// `λ·a + (1−λ)·b`.
pub fn linear_fuse<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>, lambda: f64) -> Result<Var<'t, T>> {
    check_lambda(lambda)?;
    Ok(a.mul_scalar(lambda).add(b.mul_scalar(1.0 - lambda))?)
}

/// Same fusion on plain tensors, used for the mixed input images.
pub fn fuse_tensors<T: Real>(a: &Tensor<T>, b: &Tensor<T>, lambda: f64) -> Result<Tensor<T>> {
    check_lambda(lambda)?;
    a.check_same_shape(b)?;
    let (la, lb) = (T::of(lambda), T::of(1.0 - lambda));
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| la * x + lb * y).collect();
    Ok(Tensor::new(a.shape().to_vec(), data)?)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("fusion weight {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Mean absolute difference between a prediction and a pseudo-label. The
/// pseudo-label is detached here so no gradient can reach its producers.
pub fn loss_lr<'t, T: Real>(y_ph: Var<'t, T>, m_ph: Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(y_ph.sub(m_ph.detach())?.abs().mean())
}

/// How the fusion weight λ is chosen each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum FusionSpec {
    Fixed { lambda: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Default for FusionSpec {
    fn default() -> Self {
        FusionSpec::Fixed { lambda: 0.5 }
    }
}

impl FusionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FusionSpec::Fixed { lambda } => check_lambda(lambda),
            FusionSpec::Uniform { lo, hi } => {
                check_lambda(lo)?;
                check_lambda(hi)?;
                if lo > hi {
                    return Err(Error::Config(format!("empty fusion range [{lo}, {hi}]")));
                }
                Ok(())
            }
        }
    }

    /// Draws λ. A fixed spec consumes no randomness.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            FusionSpec::Fixed { lambda } => lambda,
            FusionSpec::Uniform { lo, hi } if lo == hi => lo,
            FusionSpec::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

/// Which optional terms join the pixel loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Toggles {
    pub sp: bool,
    /// Enables the scribble loss, whose unlabeled part is the BME term.
    pub bme: bool,
    pub lr: bool,
}

impl Toggles {
    pub const BASELINE: Toggles = Toggles { sp: false, bme: false, lr: false };
    pub const FULL: Toggles = Toggles { sp: true, bme: true, lr: true };

    /// The five ablation rows in table order.
    pub const ABLATION: [Toggles; 5] = [
        Toggles::BASELINE,
        Toggles { sp: true, bme: false, lr: false },
        Toggles { sp: false, bme: true, lr: false },
        Toggles { sp: true, bme: true, lr: false },
        Toggles::FULL,
    ];

    pub fn label(&self) -> String {
        let mut s = String::from("bce");
        for (on, name) in [(self.sp, "+sp"), (self.bme, "+bme"), (self.lr, "+lr")] {
            if on {
                s.push_str(name);
            }
        }
        s
    }
}

/// Scalar values of each term; disabled terms are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pixel: f64,
    pub l_sp: f64,
    pub l_scribble: f64,
    pub l_lr: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn from_parts(l_pixel: f64, l_sp: f64, l_scribble: f64, l_lr: f64) -> Self {
        Self { l_pixel, l_sp, l_scribble, l_lr, l_total: l_pixel + l_sp + l_scribble + l_lr }
    }

    pub const CSV_HEADER: &'static str = "iteration,l_pixel,l_sp,l_scribble,l_lr,l_total";

    pub fn csv_row(&self, iteration: usize) -> String {
        format!(
            "{iteration},{},{},{},{},{}",
            self.l_pixel, self.l_sp, self.l_scribble, self.l_lr, self.l_total
        )
    }
}

/// Graph nodes of the individual terms for one triplet.
pub struct LossParts<'t, T: Real> {
    pub pixel: Var<'t, T>,
    pub sp: Option<Var<'t, T>>,
    pub scribble: Option<Var<'t, T>>,
    pub lr: Option<Var<'t, T>>,
}

/// Unweighted sum of the enabled terms, and its breakdown.
pub fn loss_total<'t, T: Real>(
    parts: &LossParts<'t, T>,
    toggles: Toggles,
) -> Result<(Var<'t, T>, LossBreakdown)> {
    let mut total = parts.pixel;
    let mut vals = [parts.pixel.item()?.as_f64(), 0.0, 0.0, 0.0];
    let optional = [(toggles.sp, parts.sp, "sp"), (toggles.bme, parts.scribble, "scribble"), (toggles.lr, parts.lr, "lr")];
    for (k, (on, part, name)) in optional.into_iter().enumerate() {
        if !on {
            continue;
        }
        let v = part.ok_or_else(|| Error::Config(format!("{name} term enabled but not computed")))?;
        total = total.add(v)?;
        vals[k + 1] = v.item()?.as_f64();
    }
    Ok((total, LossBreakdown::from_parts(vals[0], vals[1], vals[2], vals[3])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::box_to_mask;
    use crate::tensor::Tape;
    use proptest::prelude::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64s(shape.to_vec(), v).unwrap()
    }

    fn val(v: Var<'_, f64>) -> f64 {
        v.item().unwrap()
    }

    #[test]
    fn bce_examples() {
        let tape = Tape::<f64>::new();
        let one = tape.constant(t(&[1], &[1.0]));
        let half = tape.constant(t(&[1], &[0.5]));
        assert!((val(loss_bce(half, one, Normalize::Sum).unwrap()) - 2f64.ln()).abs() < 1e-12);
        let y = tape.constant(t(&[1], &[0.8]));
        assert!((val(loss_bce(y, one, Normalize::Sum).unwrap()) - 0.2231).abs() < 1e-4);
        let m = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let l = val(loss_bce(m, m, Normalize::Mean).unwrap());
        assert!((0.0..=1.1e-7).contains(&l), "{l}");
    }

    #[test]
    fn dice_examples() {
        let tape = Tape::<f64>::new();
        let m = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 0.0]));
        let half = tape.constant(Tensor::full(vec![2, 2], 0.5));
        // 1 − 2·0.5/(1 + 2)
        let oracle = 1.0 - 2.0 * 0.5 / (1.0 + 2.0);
        assert!((val(loss_dice(half, m).unwrap()) - oracle).abs() < 1e-12);
        assert!((oracle - 0.6667).abs() < 1e-4);
        assert_eq!(val(loss_dice(m, m).unwrap()), 0.0);
        let zero = tape.constant(Tensor::zeros(vec![2, 2]));
        assert_eq!(val(loss_dice(zero, m).unwrap()), 1.0);
        assert_eq!(val(loss_dice(zero, zero).unwrap()), 0.0);
    }

    #[test]
    fn projections_of_small_map() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(t(&[2, 2], &[0.1, 0.9, 0.4, 0.2]));
        let p = project_pair(y, &BoxAnnotation::new(1, 0, 1, 0)).unwrap();
        assert_eq!(p.y_w.value().data(), &[0.4, 0.9]);
        assert_eq!(p.y_h.value().data(), &[0.9, 0.4]);
        assert_eq!(p.m_w.value().data(), &[0.0, 1.0]);
        assert_eq!(p.m_h.value().data(), &[1.0, 0.0]);
        assert_eq!(p.y_w.shape(), vec![1, 2]);
        assert_eq!(p.y_h.shape(), vec![2, 1]);
        let full = project_pair(y, &BoxAnnotation::new(0, 0, 1, 1)).unwrap();
        assert_eq!(full.m_w.value().data(), &[1.0, 1.0]);
        assert_eq!(full.m_h.value().data(), &[1.0, 1.0]);
    }

    #[test]
    fn sp_hand_value() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(Tensor::full(vec![2, 2], 0.5));
        let l = val(loss_sp(y, &BoxAnnotation::new(1, 0, 1, 0), Normalize::Sum).unwrap());
        // BCE half: each 2-vector sums to 2·ln2; Dice of each vector is 0.5.
        let oracle = 0.5 * (2.0 * 2f64.ln() + 2.0 * 2f64.ln()) + 0.5 * (0.5 + 0.5);
        assert!((l - oracle).abs() < 1e-12);
        assert!((l - 1.8863).abs() < 1e-4);
    }

    #[test]
    fn sp_of_exact_box_mask_is_near_zero() {
        let b = BoxAnnotation::new(3, 4, 10, 12);
        let m: Tensor<f64> = box_to_mask(&b, 16, 16).unwrap().to_tensor();
        let tape = Tape::new();
        let l = val(loss_sp(tape.constant(m), &b, Normalize::Sum).unwrap());
        assert!((0.0..=1e-5).contains(&l), "{l}");
    }

    #[test]
    fn bme_anchor_values() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(t(&[3], &[0.5, 0.9, 0.1]));
        let v = loss_bme(y).unwrap().value().to_f64_vec();
        assert!((v[0] - 2f64.ln()).abs() < 1e-12);
        assert!((v[1] - 0.1054).abs() < 1e-4);
        assert!((v[1] - -(0.9f64.ln())).abs() < 1e-12);
        assert!((v[2] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn bme_tie_takes_first_branch() {
        // At y = 0.5, d/dy −log y = −2 while d/dy −log(1−y) = +2.
        let tape = Tape::<f64>::new();
        let y = tape.param(t(&[1], &[0.5]));
        let g = tape.backward(loss_bme(y).unwrap().sum()).unwrap().get(y).unwrap();
        assert_eq!(g.data(), &[-2.0]);
    }

    fn scribble(w: usize, h: usize, codes: &[u8]) -> ScribbleAnnotation {
        let labels = codes.iter().map(|&c| ScribbleLabel::from_code(c).unwrap()).collect();
        ScribbleAnnotation::new(w, h, labels).unwrap()
    }

    #[test]
    fn scribble_hand_value() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(t(&[1, 2], &[0.8, 0.9]));
        let s = scribble(2, 1, &[255, 0]);
        let l = val(loss_scribble(y, &s).unwrap());
        let oracle = (-(0.8f64.ln()) + -(0.9f64.ln())) / 2.0;
        assert!((l - oracle).abs() < 1e-12);
        assert!((l - 0.1643).abs() < 1e-4);
    }

    #[test]
    fn scribble_at_half_is_ln2() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(Tensor::full(vec![3, 3], 0.5));
        let s = scribble(3, 3, &[0, 255, 128, 0, 0, 0, 255, 0, 128]);
        assert!((val(loss_scribble(y, &s).unwrap()) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scribble_shape_must_match() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(Tensor::full(vec![2, 3], 0.5));
        assert!(loss_scribble(y, &scribble(2, 2, &[0, 255, 0, 0])).is_err());
    }

    #[test]
    fn fusion_examples() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(t(&[2], &[0.3, 1.0]));
        let b = tape.constant(t(&[2], &[0.9, 0.0]));
        assert_eq!(linear_fuse(a, b, 1.0).unwrap().value().data(), a.value().data());
        assert_eq!(linear_fuse(a, b, 0.5).unwrap().value().data()[1], 0.5);
        assert!(linear_fuse(a, b, 1.5).is_err());
        assert!(fuse_tensors(&t(&[1], &[0.0]), &t(&[2], &[0.0, 0.0]), 0.5).is_err());
    }

    #[test]
    fn lr_examples() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(t(&[1], &[0.7]));
        let m = tape.constant(t(&[1], &[0.2]));
        assert!((val(loss_lr(y, m).unwrap()) - 0.5).abs() < 1e-12);
        let y = tape.constant(t(&[2], &[0.4, 0.5]));
        let m = tape.constant(t(&[2], &[0.3, 0.8]));
        assert!((val(loss_lr(y, m).unwrap()) - 0.2).abs() < 1e-12);
        assert_eq!(val(loss_lr(y, y).unwrap()), 0.0);
    }

    #[test]
    fn lr_blocks_gradient_to_pseudo_label() {
        let tape = Tape::<f64>::new();
        let y = tape.param(t(&[2], &[0.4, 0.5]));
        let m = tape.param(t(&[2], &[0.3, 0.8]));
        let g = tape.backward(loss_lr(y, m).unwrap()).unwrap();
        assert!(g.get(m).is_none());
        assert_eq!(g.get(y).unwrap().data(), &[0.5, -0.5]);
    }

    #[test]
    fn total_sums_enabled_terms() {
        let tape = Tape::<f64>::new();
        let c = |v: f64| tape.constant(Tensor::scalar(v));
        let parts = LossParts { pixel: c(0.5), sp: Some(c(0.25)), scribble: Some(c(0.125)), lr: Some(c(1.0)) };
        let (v, b) = loss_total(&parts, Toggles::BASELINE).unwrap();
        assert_eq!(val(v), 0.5);
        assert_eq!(b, LossBreakdown { l_pixel: 0.5, l_total: 0.5, ..Default::default() });
        let (v, b) = loss_total(&parts, Toggles::FULL).unwrap();
        assert_eq!(val(v), 1.875);
        assert_eq!(b.l_total, b.l_pixel + b.l_sp + b.l_scribble + b.l_lr);
        let zero = LossParts { pixel: c(0.0), sp: Some(c(0.0)), scribble: Some(c(0.0)), lr: Some(c(0.0)) };
        assert_eq!(loss_total(&zero, Toggles::FULL).unwrap().1.l_total, 0.0);
        let missing = LossParts { pixel: c(0.0), sp: None, scribble: None, lr: None };
        assert!(loss_total(&missing, Toggles { sp: true, ..Toggles::BASELINE }).is_err());
    }

    #[test]
    fn uniform_fusion_stays_in_range() {
        use rand::SeedableRng;
        let spec = FusionSpec::Uniform { lo: 0.3, hi: 0.7 };
        spec.validate().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert!((0.3..=0.7).contains(&spec.sample(&mut rng)));
        }
        assert!(FusionSpec::Uniform { lo: 0.8, hi: 0.2 }.validate().is_err());
        assert!(FusionSpec::Fixed { lambda: -0.1 }.validate().is_err());
    }

    fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..=1.0, n)
    }

    proptest! {
        #[test]
        fn bme_is_symmetric(y in 1e-7f64..1.0 - 1e-7) {
            let tape = Tape::<f64>::new();
            let a = loss_bme(tape.constant(t(&[1], &[y]))).unwrap().item().unwrap();
            let b = loss_bme(tape.constant(t(&[1], &[1.0 - y]))).unwrap().item().unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(a <= 2f64.ln() + 1e-15);
        }

        #[test]
        fn dice_is_bounded(y in probs(12), m in proptest::collection::vec(0u8..2, 12)) {
            let tape = Tape::<f64>::new();
            let m: Vec<f64> = m.into_iter().map(f64::from).collect();
            let d = val(loss_dice(tape.constant(t(&[3, 4], &y)), tape.constant(t(&[3, 4], &m))).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn lr_is_symmetric_and_nonnegative(a in probs(9), b in probs(9)) {
            let tape = Tape::<f64>::new();
            let (x, y) = (tape.constant(t(&[3, 3], &a)), tape.constant(t(&[3, 3], &b)));
            let l = val(loss_lr(x, y).unwrap());
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l, val(loss_lr(y, x).unwrap()));
            prop_assert_eq!(l == 0.0, a == b);
        }

        #[test]
        fn scribble_without_unlabeled_is_mean_bce(y in probs(16), m in proptest::collection::vec(0u8..2, 16)) {
            let tape = Tape::<f64>::new();
            let codes: Vec<u8> = m.iter().map(|&v| if v == 1 { 255 } else { 128 }).collect();
            let s = scribble(4, 4, &codes);
            let yv = tape.constant(t(&[4, 4], &y));
            let mv = tape.constant(t(&[4, 4], &m.iter().map(|&v| v as f64).collect::<Vec<_>>()));
            let a = val(loss_scribble(yv, &s).unwrap());
            let b = val(loss_bce(yv, mv, Normalize::Mean).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
    }
}
