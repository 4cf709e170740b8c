use crate::{Result, ScrError};

/// Largest relative disagreement between the analytic gradient returned by
/// `loss` and central finite differences, over every coordinate of `point`.
///
/// The error for one coordinate is `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check<F>(mut loss: F, point: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(ScrError::contract(format!("eps must lie in (0, 1e-2], got {eps}")));
    }
    let (_, analytic) = loss(point)?;
    if analytic.len() != point.len() {
        return Err(ScrError::contract(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            point.len()
        )));
    }
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let (plus, _) = loss(&probe)?;
        probe[i] = point[i] - eps;
        let (minus, _) = loss(&probe)?;
        probe[i] = point[i];
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
        if err.is_nan() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::distributions::{Distribution, Uniform};
    use rand::SeedableRng;

    #[test]
    fn quadratic_least_squares() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let d = Uniform::new(-1.0, 1.0);
        let x = Array1::from_shape_fn(4, |_| d.sample(&mut rng));
        let y = Array1::from_shape_fn(3, |_| d.sample(&mut rng));
        let w0: Vec<f64> = (0..12).map(|_| d.sample(&mut rng)).collect();
        let err = grad_check(
            |p: &[f64]| {
                let w = Array2::from_shape_vec((3, 4), p.to_vec()).unwrap();
                let r = w.dot(&x) - &y;
                let loss = r.dot(&r);
                // d/dW ||Wx - y||^2 = 2 r x^T
                let g = Array2::from_shape_fn((3, 4), |(i, j)| 2.0 * r[i] * x[j]);
                Ok((loss, g.into_raw_vec_and_offset().0))
            },
            &w0,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let err = grad_check(|p: &[f64]| Ok((3.0, vec![0.0; p.len()])), &[1.0, 2.0], 1e-4).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let err = grad_check(|p: &[f64]| Ok((p[0] * p[0], vec![0.0])), &[2.0], 1e-5).unwrap();
        assert!(err > 0.9);
    }

    #[test]
    fn eps_out_of_range_is_rejected() {
        assert!(grad_check(|_p: &[f64]| Ok((0.0, vec![0.0])), &[0.0], 0.1).is_err());
        assert!(grad_check(|_p: &[f64]| Ok((0.0, vec![0.0])), &[0.0], 0.0).is_err());
    }
}
