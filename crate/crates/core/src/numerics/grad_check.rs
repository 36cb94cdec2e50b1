use alloc::vec::Vec;

use rand::seq::index;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Settings for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Central-difference step.
    pub eps: f64,
    /// Coordinates sampled per parameter tensor; smaller tensors are checked
    /// exhaustively.
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            coords_per_param: 20,
            seed: 0,
        }
    }
}

/// Central difference of `f` along every coordinate of `point`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, point: &[f64], eps: f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + eps;
            let plus = f(&x);
            x[i] = point[i] - eps;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Compares tape gradients of the scalar `f(params)` with central
/// differences and returns the largest
/// `|analytic − numeric| / max(1, |numeric|)` over the sampled coordinates.
///
/// `f` must be deterministic: dropout off, no hidden randomness.
pub fn grad_check<F>(f: F, params: &[Tensor], opts: &GradCheck) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut rng = crate::seeded_rng(opts.seed);
    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = params.to_vec();
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        let len = params[p].len();
        let coords: Vec<usize> = if len <= opts.coords_per_param {
            (0..len).collect()
        } else {
            index::sample(&mut rng, len, opts.coords_per_param).into_vec()
        };
        for c in coords {
            let original = params[p].data()[c];
            probe[p].data_mut()[c] = original + opts.eps;
            let plus = evaluate(&probe)?;
            probe[p].data_mut()[c] = original - opts.eps;
            let minus = evaluate(&probe)?;
            probe[p].data_mut()[c] = original;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = (analytic.data()[c] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let params = [Tensor::vector(alloc::vec![0.3, -1.2, 4.0, 2.5])];
        let err = grad_check(|t, p| t.sum(p[0]), &params, &GradCheck::default()).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn softmax_then_sum_of_squares() {
        // Five values; compare against an independent closed-form gradient
        // via central differences on a plain-float implementation.
        let x = [0.2, -1.0, 0.7, 1.5, -0.3];
        let params = [Tensor::matrix(1, 5, x.to_vec()).unwrap()];
        let f = |t: &mut Tape, p: &[Var]| {
            let s = t.row_softmax(p[0])?;
            let sq = t.mul(s, s)?;
            t.sum(sq)
        };
        let err = grad_check(f, &params, &GradCheck::default()).unwrap();
        assert!(err < 1e-6, "{err}");

        let plain = |v: &[f64]| {
            let m = v.iter().copied().fold(f64::MIN, f64::max);
            let e: Vec<f64> = v.iter().map(|a| (a - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|a| (a / z) * (a / z)).sum::<f64>()
        };
        let numeric = central_difference(plain, &x, 1e-6);
        let mut tape = Tape::new();
        let v = tape.param(params[0].clone());
        let loss = f(&mut tape, &[v]).unwrap();
        let analytic = tape.backward(loss).unwrap().wrt(v);
        for (a, n) in analytic.data().iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-8);
        }
    }
}
