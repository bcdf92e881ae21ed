//! Evaluation metrics in original target units.

use crate::error::{DataError, Result};
use crate::model::PredictiveMixture;
use crate::special::{norm_cdf, norm_pdf};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(DataError::Length(a, b).into());
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_len(predictions.len(), targets.len())?;
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / targets.len() as f64).sqrt())
}

/// Mean negative predictive log density.
///
/// `mixture` and `targets` live in standardized units; adding
/// `ln(target_scale)` reports the density of the original targets.
pub fn test_nll(mixture: &PredictiveMixture, targets: &[f64], noise_var: f64, target_scale: f64) -> Result<f64> {
    let lp = mixture.log_density(targets, noise_var)?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64 + target_scale.ln())
}

/// `E|X - d|` for `X ~ N(0, var)`, i.e. `√v [z(2Φ(z) - 1) + 2φ(z)]` with `z = d/√v`.
pub fn abs_moment(d: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return d.abs();
    }
    let sd = var.sqrt();
    let z = d / sd;
    sd * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z))
}

/// CRPS of an equally weighted Gaussian mixture, each component
/// `N(means[r], vars[r] + noise_var)`, at target `y`.
pub fn crps_mixture(means: &[f64], vars: &[f64], noise_var: f64, y: f64) -> f64 {
    let r = means.len() as f64;
    let fit: f64 = means.iter().zip(vars).map(|(m, v)| abs_moment(y - m, v + noise_var)).sum::<f64>() / r;
    let mut spread = 0.0;
    for (i, (mi, vi)) in means.iter().zip(vars).enumerate() {
        // the pair sum is symmetric: count each off-diagonal pair twice
        spread += abs_moment(0.0, 2.0 * (vi + noise_var));
        for (mj, vj) in means[i + 1..].iter().zip(&vars[i + 1..]) {
            spread += 2.0 * abs_moment(mi - mj, vi + vj + 2.0 * noise_var);
        }
    }
    fit - 0.5 * spread / (r * r)
}

/// Mean CRPS over test points, scaled to original units.
pub fn mean_crps(mixture: &PredictiveMixture, targets: &[f64], noise_var: f64, target_scale: f64) -> Result<f64> {
    check_len(mixture.len(), targets.len())?;
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(n, &y)| {
            let (m, v) = mixture.point(n);
            crps_mixture(m, v, noise_var, y)
        })
        .sum();
    Ok(total / targets.len() as f64 * target_scale)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub nll: f64,
    pub crps: f64,
}

/// RMSE, NLL and CRPS in original units from a mixture over standardized
/// targets. `targets` are standardized; `(y_mean, y_scale)` undo it.
pub fn regression_metrics(
    mixture: &PredictiveMixture,
    targets: &[f64],
    noise_var: f64,
    y_mean: f64,
    y_scale: f64,
) -> Result<RegressionMetrics> {
    check_len(mixture.len(), targets.len())?;
    let pred: Vec<f64> = mixture.mean().iter().map(|m| m * y_scale + y_mean).collect();
    let raw: Vec<f64> = targets.iter().map(|t| t * y_scale + y_mean).collect();
    Ok(RegressionMetrics {
        rmse: rmse(&pred, &raw)?,
        nll: test_nll(mixture, targets, noise_var, y_scale)?,
        crps: mean_crps(mixture, targets, noise_var, y_scale)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryMetrics {
    /// Fraction in `[0, 1]`.
    pub accuracy: f64,
    pub mean_log_likelihood: f64,
}

/// Accuracy (threshold 0.5, ties to `+1`) and mean log-likelihood of
/// `±1` labels under class-`+1` probabilities.
pub fn binary_metrics(prob_positive: &[f64], labels: &[f64]) -> Result<BinaryMetrics> {
    check_len(prob_positive.len(), labels.len())?;
    let n = labels.len() as f64;
    let correct = prob_positive.iter().zip(labels).filter(|(p, y)| (**p >= 0.5) == (**y > 0.0)).count();
    let ll: f64 = prob_positive.iter().zip(labels).map(|(p, y)| if *y > 0.0 { p.ln() } else { (1.0 - p).ln() }).sum();
    Ok(BinaryMetrics { accuracy: correct as f64 / n, mean_log_likelihood: ll / n })
}

/// Mean and standard error `sd / √n` (sample standard deviation).
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use crate::tensor::Tensor;
    use rand::Rng;
    use std::f64::consts::PI;

    fn single(mean: f64, var: f64) -> PredictiveMixture {
        PredictiveMixture { means: Tensor::from_shape([1, 1], vec![mean]), vars: Tensor::from_shape([1, 1], vec![var]) }
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap() - 0.5).abs() < 1e-15);
        let a = rng::normals(&mut rng::stream(1, Domain::Test, &[0]), 50);
        let b = rng::normals(&mut rng::stream(1, Domain::Test, &[1]), 50);
        let mut acc = 0.0;
        for i in 0..50 {
            acc += (a[i] - b[i]) * (a[i] - b[i]);
        }
        assert!((rmse(&a, &b).unwrap() - (acc / 50.0).sqrt()).abs() < 1e-14);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nll_at_mean_and_scaling() {
        let nll = test_nll(&single(0.0, 0.5), &[0.0], 0.5, 1.0).unwrap();
        assert!((nll - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        let scaled = test_nll(&single(0.0, 0.5), &[0.0], 0.5, 3.0).unwrap();
        assert!((scaled - nll - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn crps_single_gaussian_at_mean() {
        let sigma: f64 = 1.7;
        let c = crps_mixture(&[0.3], &[sigma * sigma], 0.0, 0.3);
        assert!((c - sigma * (2f64.sqrt() - 1.0) / PI.sqrt()).abs() < 1e-14);
        assert!(crps_mixture(&[0.3], &[0.0], 0.0, 0.3).abs() < 1e-15);
    }

    #[test]
    fn crps_matches_sample_estimator() {
        let means: [f64; 3] = [-1.0, 0.4, 2.0];
        let vars: [f64; 3] = [0.3, 1.1, 0.5];
        let y: f64 = 0.7;
        let mut r = rng::stream(9, Domain::Test, &[3]);
        let n = 1_000_000;
        let draw = |r: &mut rand_chacha::ChaCha8Rng| {
            let k = r.random_range(0..3);
            means[k] + vars[k].sqrt() * rng::normals(r, 1)[0]
        };
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, b) = (draw(&mut r), draw(&mut r));
            vals.push((a - y).abs() - 0.5 * (a - b).abs());
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let exact = crps_mixture(&means, &vars, 0.0, y);
        assert!((mean - exact).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn crps_is_nonnegative() {
        let mut r = rng::stream(2, Domain::Test, &[4]);
        for _ in 0..200 {
            let k = r.random_range(1..6);
            let m = rng::normals(&mut r, k);
            let v: Vec<f64> = (0..k).map(|_| r.random_range(0.0..2.0)).collect();
            let y = 3.0 * rng::normals(&mut r, 1)[0];
            assert!(crps_mixture(&m, &v, 0.0, y) >= -1e-12);
        }
    }

    #[test]
    fn binary_cases() {
        let m = binary_metrics(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((m.accuracy, m.mean_log_likelihood), (1.0, 0.0));
        let m = binary_metrics(&[0.5, 0.5, 0.5], &[1.0, -1.0, 1.0]).unwrap();
        assert!((m.mean_log_likelihood + 2f64.ln()).abs() < 1e-15);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        let m = binary_metrics(&[0.9, 0.2, 0.4], &[1.0, -1.0, 1.0]).unwrap();
        let direct = (0.9f64.ln() + 0.8f64.ln() + 0.4f64.ln()) / 3.0;
        assert!((m.mean_log_likelihood - direct).abs() < 1e-15);
    }

    #[test]
    fn standard_error_by_hand() {
        let (m, se) = mean_and_standard_error(&[1.0, 2.0, 6.0]);
        assert_eq!(m, 3.0);
        // sample variance 7, se = sqrt(7/3)
        assert!((se - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
