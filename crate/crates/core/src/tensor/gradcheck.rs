//! Central-difference gradient checking in 64-bit precision.

use super::{Tape, Tensor, TensorError, Var};
use crate::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step `h`.
    pub step: f64,
    /// Check at most this many evenly spaced coordinates per input.
    pub max_coords_per_input: Option<usize>,
    /// Multiplier applied to the autodiff gradient before comparison.
    /// Anything other than 1.0 is a negative control.
    pub analytic_scale: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-6, max_coords_per_input: None, analytic_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |a − n| / max(1e-8, |a| + |n|)` over checked coordinates.
    pub max_rel_error: f64,
    /// `(input, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Compares the autodiff gradient of a scalar function with central
/// differences over every coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], step: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    grad_check_with(f, inputs, &GradCheckOptions { step, ..GradCheckOptions::default() })
}

pub fn grad_check_with<F>(
    f: F,
    inputs: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let value_at = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let v = f(&tape, &vars)?.item()?;
        if !v.is_finite() {
            return Err(TensorError::NonFinite(v).into());
        }
        Ok(v)
    };

    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&tape, &vars)?;
        let v = out.item()?;
        if !v.is_finite() {
            return Err(TensorError::NonFinite(v).into());
        }
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.get_or_zeros(v)).collect()
    };

    let h = opts.step;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, coordinates: 0 };
    let mut probe = inputs.to_vec();
    for (input, grad) in analytic.iter().enumerate() {
        let len = inputs[input].len();
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(m) if m < len => (0..m).map(|i| i * len / m).collect(),
            _ => (0..len).collect(),
        };
        for j in coords {
            let x0 = inputs[input].data()[j];
            probe[input].data_mut()[j] = x0 + h;
            let plus = value_at(&probe)?;
            probe[input].data_mut()[j] = x0 - h;
            let minus = value_at(&probe)?;
            probe[input].data_mut()[j] = x0;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[j] * opts.analytic_scale;
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((input, j));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn sum_of_sigmoid() {
        let r = grad_check(|_, x| Ok(x[0].sigmoid().sum()), &[random(&[4, 4], 1)], 1e-6).unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
        assert_eq!(r.coordinates, 16);
    }

    #[test]
    fn linear_function_is_exact() {
        let r = grad_check(|_, x| Ok(x[0].sum()), &[random(&[3, 5], 2)], 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn axis_max_away_from_ties() {
        fn f<'t>(_: &'t Tape<f64>, x: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
            let a = x[0].axis_max(crate::tensor::Axis::Rows)?;
            let b = x[0].axis_max(crate::tensor::Axis::Cols)?;
            Ok(a.sum().add(b.sum())?)
        }
        let r = grad_check(f, &[random(&[5, 6], 3)], 1e-6).unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let opts = GradCheckOptions { analytic_scale: 1.5, ..Default::default() };
        let r = grad_check_with(|_, x| Ok(x[0].sigmoid().sum()), &[random(&[3, 3], 4)], &opts)
            .unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let x = Tensor::from_f64s(vec![1], &[0.0]).unwrap();
        fn f<'t>(_: &'t Tape<f64>, x: &[Var<'t, f64>]) -> Result<Var<'t, f64>> {
            Ok(x[0].div(x[0])?.sum())
        }
        assert!(grad_check(f, &[x], 1e-6).is_err());
    }
}
