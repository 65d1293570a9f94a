//! Central finite differences, the reference every hand-written backward pass
//! is checked against.

use crate::error::{Error, Result};
use crate::numerics::param::HasParams;
use crate::numerics::tensor::Tensor;

/// Default probe step for 64-bit certification.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for relative errors. Coordinates whose true derivative
/// is below this magnitude are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Estimate `d f / d theta` for every scalar coordinate of every parameter of
/// `model` by central differences. Parameter values are restored afterwards.
pub fn finite_diff_grad<M, F>(model: &mut M, step: f64, mut f: F) -> Result<Vec<Tensor<f64>>>
where
    M: HasParams<f64>,
    F: FnMut(&mut M) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be > 0, got {step}"
        )));
    }
    let shapes: Vec<Vec<usize>> = model
        .params()
        .iter()
        .map(|p| p.value.shape().to_vec())
        .collect();
    let mut grads = Vec::with_capacity(shapes.len());
    for (pi, shape) in shapes.iter().enumerate() {
        let n: usize = shape.iter().product();
        let mut g = Vec::with_capacity(n);
        for j in 0..n {
            let orig = model.params()[pi].value[j];
            model.params_mut()[pi].value[j] = orig + step;
            let plus = f(model)?;
            model.params_mut()[pi].value[j] = orig - step;
            let minus = f(model)?;
            model.params_mut()[pi].value[j] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                let name = model.params()[pi].name.clone();
                return Err(Error::NonFinite(format!(
                    "objective at probe {name}[{j}] is not finite"
                )));
            }
            g.push((plus - minus) / (2.0 * step));
        }
        grads.push(Tensor::new(shape, g)?);
    }
    Ok(grads)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Largest coordinate-wise relative error between two gradient tensors.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::param::Param;

    #[test]
    fn square_at_three() {
        let mut ps = vec![Param::new("theta", Tensor::scalar(3.0))];
        let g = finite_diff_grad(&mut ps, 1e-5, |m| Ok(m[0].value[0].powi(2))).unwrap();
        assert!((g[0][0] - 6.0).abs() < 1e-6);
        assert_eq!(ps[0].value[0], 3.0);
    }

    #[test]
    fn sum_has_unit_gradient() {
        let mut ps = vec![
            Param::new("a", Tensor::from_vec(vec![0.3, -2.0, 11.0])),
            Param::new("b", Tensor::from_vec(vec![5.5])),
        ];
        let g =
            finite_diff_grad(&mut ps, 1e-5, |m| Ok(m.iter().map(|p| p.value.sum()).sum())).unwrap();
        for t in &g {
            assert!(t.data().iter().all(|&v| (v - 1.0).abs() < 1e-8));
        }
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let mut ps = vec![Param::new("x", Tensor::scalar(0.0))];
        let r = finite_diff_grad(&mut ps, 1e-5, |m| Ok(1.0 / m[0].value[0].abs().min(0.0)));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut ps = vec![Param::new("x", Tensor::scalar(0.0))];
        assert!(finite_diff_grad(&mut ps, 0.0, |_| Ok(0.0)).is_err());
    }
}
