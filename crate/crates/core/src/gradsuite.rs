//! Finite-difference checks of every differentiable op and loss, each on
//! small random inputs kept away from the points where it is not smooth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{BoxAnnotation, PixelMask, ScribbleAnnotation, ScribbleLabel};
use crate::losses::{self, LossParts, Normalize, Toggles};
use crate::tensor::{grad_check_with, Axis, GradCheckOptions, Tape, Tensor, Var};
use crate::{Error, Result};

/// Largest relative error a row may report.
pub const TOLERANCE: f64 = 1e-4;
/// Seeds per row; seed `s` of a run with base seed `b` is `b + s`.
pub const SEEDS: u64 = 5;
/// Finite-difference step.
pub const STEP: f64 = 1e-6;
/// Factor applied to the autodiff gradient of a corrupted row.
const CORRUPTION: f64 = 1.5;

type Objective = Box<dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>>;

struct Case {
    inputs: Vec<Tensor<f64>>,
    f: Objective,
}

type Builder = fn(&mut ChaCha8Rng) -> Case;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub name: &'static str,
    /// Worst relative error over all seeds.
    pub max_rel_error: f64,
    /// Coordinates compared, summed over seeds.
    pub coordinates: usize,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn failing(&self) -> Vec<&SuiteRow> {
        self.rows.iter().filter(|r| !r.passed()).collect()
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(SuiteRow::passed)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Values whose magnitude is at least `gap`, with random sign.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let v = rng.random_range(gap..hi);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// A permutation of evenly spaced values in `[-3, 3]`: no two entries are
/// closer than `6 / (n − 1)`, so maxima have no near ties.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| -3.0 + 6.0 * i as f64 / (n.max(2) - 1) as f64).collect();
    v.shuffle(rng);
    Tensor::new(shape.to_vec(), v).expect("sized to shape")
}

/// `Σ r ⊙ v` with fixed random weights, so every output element counts
/// with a different coefficient.
fn weighted<'t>(v: Var<'t, f64>, r: &Tensor<f64>) -> Result<Var<'t, f64>> {
    Ok(v.mul(v.tape().constant(r.clone()))?.sum())
}

fn unary(rng: &mut ChaCha8Rng, x: Tensor<f64>, op: fn(Var<'_, f64>) -> Result<Var<'_, f64>>) -> Case {
    let r = uniform(rng, &op_shape(&x, op), -1.0, 1.0);
    Case { inputs: vec![x], f: Box::new(move |_, v| weighted(op(v[0])?, &r)) }
}

fn op_shape(x: &Tensor<f64>, op: fn(Var<'_, f64>) -> Result<Var<'_, f64>>) -> Vec<usize> {
    let tape = Tape::new();
    op(tape.constant(x.clone())).expect("op accepts its own test input").shape()
}

type BinaryFn = for<'t> fn(Var<'t, f64>, Var<'t, f64>) -> Result<Var<'t, f64>>;

fn binary(a: Tensor<f64>, b: Tensor<f64>, rng: &mut ChaCha8Rng, op: BinaryFn) -> Case {
    let r = uniform(rng, a.shape(), -1.0, 1.0);
    Case { inputs: vec![a, b], f: Box::new(move |_, v| weighted(op(v[0], v[1])?, &r)) }
}

const SHAPE: [usize; 2] = [5, 6];
const MAP: [usize; 2] = [8, 8];

fn random_box(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BoxAnnotation {
    let (x0, y0) = (rng.random_range(0..w - 2), rng.random_range(0..h - 2));
    BoxAnnotation::new(x0, y0, rng.random_range(x0 + 1..w), rng.random_range(y0 + 1..h))
}

fn random_scribble(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ScribbleAnnotation {
    let mut labels: Vec<ScribbleLabel> = (0..h * w)
        .map(|_| match rng.random_range(0..10) {
            0 => ScribbleLabel::Foreground,
            1 => ScribbleLabel::Background,
            _ => ScribbleLabel::Unlabeled,
        })
        .collect();
    labels[rng.random_range(0..h * w)] = ScribbleLabel::Foreground;
    ScribbleAnnotation::new(w, h, labels).expect("sized labels")
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor<f64> {
    let values = (0..h * w).map(|_| rng.random_bool(0.4) as u8).collect();
    PixelMask::new(w, h, values).expect("binary").to_tensor()
}

/// A pseudo-label at least 0.05 away from `sigmoid(z)` everywhere, so the
/// absolute value in the consistency loss stays differentiable.
fn pseudo_label(rng: &mut ChaCha8Rng, z: &Tensor<f64>) -> Tensor<f64> {
    Tensor::from_fn(z.shape().to_vec(), |i| {
        let y = 1.0 / (1.0 + (-z.data()[i]).exp());
        let d = rng.random_range(0.05..0.3);
        if y > 0.5 {
            y - d
        } else {
            y + d
        }
    })
}

fn conv_case(rng: &mut ChaCha8Rng, k: usize, stride: usize, pad: usize, bias: bool) -> Case {
    let x = uniform(rng, &[2, 7, 8], -1.0, 1.0);
    let w = uniform(rng, &[3, 2, k, k], -1.0, 1.0);
    let mut inputs = vec![x, w];
    if bias {
        inputs.push(uniform(rng, &[3], -1.0, 1.0));
    }
    let out_h = (7 + 2 * pad - k) / stride + 1;
    let out_w = (8 + 2 * pad - k) / stride + 1;
    let r = uniform(rng, &[3, out_h, out_w], -1.0, 1.0);
    Case {
        inputs,
        f: Box::new(move |_, v| weighted(v[0].conv2d(v[1], v.get(2).copied(), stride, pad)?, &r)),
    }
}

fn registry() -> Vec<(&'static str, Builder)> {
    vec![
        ("add", |rng| {
            let (a, b) = (uniform(rng, &SHAPE, -2.0, 2.0), uniform(rng, &SHAPE, -2.0, 2.0));
            binary(a, b, rng, |a, b| Ok(a.add(b)?))
        }),
        ("sub", |rng| {
            let (a, b) = (uniform(rng, &SHAPE, -2.0, 2.0), uniform(rng, &SHAPE, -2.0, 2.0));
            binary(a, b, rng, |a, b| Ok(a.sub(b)?))
        }),
        ("mul", |rng| {
            let (a, b) = (uniform(rng, &SHAPE, -2.0, 2.0), uniform(rng, &SHAPE, -2.0, 2.0));
            binary(a, b, rng, |a, b| Ok(a.mul(b)?))
        }),
        ("div", |rng| {
            let (a, b) = (uniform(rng, &SHAPE, -2.0, 2.0), away_from_zero(rng, &SHAPE, 0.5, 2.0));
            binary(a, b, rng, |a, b| Ok(a.div(b)?))
        }),
        ("min", |rng| {
            let a = uniform(rng, &SHAPE, -2.0, 2.0);
            let gap = away_from_zero(rng, &SHAPE, 0.1, 1.0);
            let b = Tensor::from_fn(SHAPE.to_vec(), |i| a.data()[i] + gap.data()[i]);
            binary(a, b, rng, |a, b| Ok(a.min(b)?))
        }),
        ("scalar_add", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            unary(rng, x, |v| Ok(v.add_scalar(0.7)))
        }),
        ("scalar_sub", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            unary(rng, x, |v| Ok(v.rsub_scalar(1.0).sub_scalar(0.3)))
        }),
        ("scalar_mul", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            unary(rng, x, |v| Ok(v.mul_scalar(-1.3)))
        }),
        ("scalar_div", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            unary(rng, x, |v| Ok(v.div_scalar(0.4)))
        }),
        ("scalar_min", |rng| {
            // Entries kept at least 0.1 from the threshold 0.25.
            let x = away_from_zero(rng, &SHAPE, 0.1, 2.0).map(|v| v + 0.25);
            unary(rng, x, |v| Ok(v.min_scalar(0.25)))
        }),
        ("abs", |rng| {
            let x = away_from_zero(rng, &SHAPE, 0.1, 2.0);
            unary(rng, x, |v| Ok(v.abs()))
        }),
        ("neg", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            unary(rng, x, |v| Ok(v.neg()))
        }),
        ("sigmoid", |rng| {
            let x = uniform(rng, &SHAPE, -4.0, 4.0);
            unary(rng, x, |v| Ok(v.sigmoid()))
        }),
        ("relu", |rng| {
            let x = away_from_zero(rng, &SHAPE, 0.1, 2.0);
            unary(rng, x, |v| Ok(v.relu()))
        }),
        ("safe_log", |rng| {
            let x = uniform(rng, &SHAPE, 0.05, 3.0);
            unary(rng, x, |v| Ok(v.safe_log(crate::tensor::LOG_EPS)))
        }),
        ("axis_max_rows", |rng| {
            let x = distinct(rng, &MAP);
            unary(rng, x, |v| Ok(v.axis_max(Axis::Rows)?))
        }),
        ("axis_max_cols", |rng| {
            let x = distinct(rng, &MAP);
            unary(rng, x, |v| Ok(v.axis_max(Axis::Cols)?))
        }),
        ("sum", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            Case { inputs: vec![x], f: Box::new(|_, v| Ok(v[0].mul(v[0])?.sum())) }
        }),
        ("mean", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            Case { inputs: vec![x], f: Box::new(|_, v| Ok(v[0].mul(v[0])?.mean())) }
        }),
        ("reshape", |rng| {
            let x = uniform(rng, &SHAPE, -2.0, 2.0);
            unary(rng, x, |v| Ok(v.reshape(vec![3, 10])?))
        }),
        ("conv2d_3x3", |rng| conv_case(rng, 3, 1, 1, true)),
        ("conv2d_3x3_stride2", |rng| conv_case(rng, 3, 2, 1, true)),
        ("conv2d_1x1", |rng| conv_case(rng, 1, 1, 0, true)),
        ("conv2d_1x1_stride2", |rng| conv_case(rng, 1, 2, 0, false)),
        ("upsample_bilinear", |rng| {
            let x = uniform(rng, &[2, 3, 4], -2.0, 2.0);
            unary(rng, x, |v| Ok(v.upsample_bilinear(7, 8)?))
        }),
        ("loss_bce_sum", |rng| {
            let (z, m) = (uniform(rng, &MAP, -3.0, 3.0), random_mask(rng, 8, 8));
            Case {
                inputs: vec![z],
                f: Box::new(move |t, v| losses::loss_bce(v[0].sigmoid(), t.constant(m.clone()), Normalize::Sum)),
            }
        }),
        ("loss_bce_mean", |rng| {
            let (z, m) = (uniform(rng, &MAP, -3.0, 3.0), random_mask(rng, 8, 8));
            Case {
                inputs: vec![z],
                f: Box::new(move |t, v| losses::loss_bce(v[0].sigmoid(), t.constant(m.clone()), Normalize::Mean)),
            }
        }),
        ("loss_dice", |rng| {
            let (z, m) = (uniform(rng, &MAP, -3.0, 3.0), random_mask(rng, 8, 8));
            Case {
                inputs: vec![z],
                f: Box::new(move |t, v| losses::loss_dice(v[0].sigmoid(), t.constant(m.clone()))),
            }
        }),
        ("loss_pixel", |rng| {
            let (z, m) = (uniform(rng, &MAP, -3.0, 3.0), random_mask(rng, 8, 8));
            Case {
                inputs: vec![z],
                f: Box::new(move |t, v| losses::loss_pixel(v[0].sigmoid(), t.constant(m.clone()))),
            }
        }),
        ("loss_sp", |rng| {
            let (z, b) = (distinct(rng, &MAP), random_box(rng, 8, 8));
            Case { inputs: vec![z], f: Box::new(move |_, v| losses::loss_sp(v[0].sigmoid(), &b, Normalize::Sum)) }
        }),
        ("loss_sp_mean", |rng| {
            let (z, b) = (distinct(rng, &MAP), random_box(rng, 8, 8));
            Case { inputs: vec![z], f: Box::new(move |_, v| losses::loss_sp(v[0].sigmoid(), &b, Normalize::Mean)) }
        }),
        ("loss_bme", |rng| {
            let z = away_from_zero(rng, &MAP, 0.2, 3.0);
            Case { inputs: vec![z], f: Box::new(|_, v| Ok(losses::loss_bme(v[0].sigmoid())?.sum())) }
        }),
        ("loss_scribble", |rng| {
            let (z, s) = (away_from_zero(rng, &MAP, 0.2, 3.0), random_scribble(rng, 8, 8));
            Case { inputs: vec![z], f: Box::new(move |_, v| losses::loss_scribble(v[0].sigmoid(), &s)) }
        }),
        ("linear_fuse", |rng| {
            let (a, b) = (uniform(rng, &MAP, -2.0, 2.0), uniform(rng, &MAP, -2.0, 2.0));
            let lambda = rng.random_range(0.0..1.0);
            let r = uniform(rng, &MAP, -1.0, 1.0);
            Case { inputs: vec![a, b], f: Box::new(move |_, v| weighted(losses::linear_fuse(v[0], v[1], lambda)?, &r)) }
        }),
        ("loss_lr", |rng| {
            let z = uniform(rng, &MAP, -3.0, 3.0);
            let m = pseudo_label(rng, &z);
            Case {
                inputs: vec![z],
                f: Box::new(move |t, v| losses::loss_lr(v[0].sigmoid(), t.constant(m.clone()))),
            }
        }),
        ("loss_total", |rng| {
            let (zp, mp) = (uniform(rng, &MAP, -3.0, 3.0), random_mask(rng, 8, 8));
            let (zb, b) = (distinct(rng, &MAP), random_box(rng, 8, 8));
            let (zs, s) = (away_from_zero(rng, &MAP, 0.2, 3.0), random_scribble(rng, 8, 8));
            let zh = uniform(rng, &MAP, -3.0, 3.0);
            let mh = pseudo_label(rng, &zh);
            Case {
                inputs: vec![zp, zb, zs, zh],
                f: Box::new(move |t, v| {
                    let parts = LossParts {
                        pixel: losses::loss_pixel(v[0].sigmoid(), t.constant(mp.clone()))?,
                        sp: Some(losses::loss_sp(v[1].sigmoid(), &b, Normalize::Sum)?),
                        scribble: Some(losses::loss_scribble(v[2].sigmoid(), &s)?),
                        lr: Some(losses::loss_lr(v[3].sigmoid(), t.constant(mh.clone()))?),
                    };
                    Ok(losses::loss_total(&parts, Toggles::FULL)?.0)
                }),
            }
        }),
    ]
}

/// Names of every registered row, in report order.
pub fn op_names() -> Vec<&'static str> {
    registry().into_iter().map(|(n, _)| n).collect()
}

/// Runs every row over [`SEEDS`] seeds starting at `seed`. `corrupt` names
/// a row whose autodiff gradient is deliberately scaled, as a negative
/// control for the checker itself.
pub fn run_suite(seed: u64, corrupt: Option<&str>) -> Result<SuiteReport> {
    let registry = registry();
    if let Some(name) = corrupt {
        if !registry.iter().any(|(n, _)| *n == name) {
            return Err(Error::Config(format!("no gradient-check row named {name:?}")));
        }
    }
    let mut rows = Vec::with_capacity(registry.len());
    for (name, build) in registry {
        let opts = GradCheckOptions {
            step: STEP,
            analytic_scale: if corrupt == Some(name) { CORRUPTION } else { 1.0 },
            ..GradCheckOptions::default()
        };
        let mut row = SuiteRow { name, max_rel_error: 0.0, coordinates: 0 };
        for s in 0..SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s));
            let case = build(&mut rng);
            let report = grad_check_with(&case.f, &case.inputs, &opts)?;
            row.max_rel_error = row.max_rel_error.max(report.max_rel_error);
            row.coordinates += report.coordinates;
        }
        rows.push(row);
    }
    Ok(SuiteReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let names = op_names();
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
    }

    #[test]
    fn unknown_corruption_target_is_rejected() {
        assert!(run_suite(0, Some("no_such_op")).is_err());
    }
}
