//! Observation models.
//!
//! Regression uses a Gaussian likelihood with a learned noise variance;
//! binary classification uses a probit link with labels in `{-1, +1}`.
//! Expectations under the final layer's Gaussian are closed form for the
//! Gaussian case and computed by Gauss–Hermite quadrature for probit.

use std::f64::consts::PI;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::special::{log_norm_cdf, norm_cdf, LN_2PI};
use crate::tensor::Tensor;

/// Initial likelihood noise variance on standardized targets.
pub const INIT_LIK_VAR: f64 = 0.1;
pub const DEFAULT_QUADRATURE_ORDER: usize = 20;

/// Physicists' Gauss–Hermite rule: `∫ e^{-x²} g(x) dx ≈ Σ w_k g(x_k)`.
///
/// Nodes are returned in increasing order. Exact for polynomials of degree
/// below `2 * order`.
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(2..=100).contains(&order) {
        return Err(Error::Contract(format!("Gauss-Hermite order must be in 2..=100, got {order}")));
    }
    let n = order;
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // orthonormal Hermite recurrence
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    x.reverse();
    w.reverse();
    Ok((x, w))
}

/// `E_{f ~ N(f_mean, f_var)}[log N(y | f, noise_var)]`.
pub fn gaussian_log_density(y: f64, f_mean: f64, f_var: f64, noise_var: f64) -> f64 {
    -0.5 * (LN_2PI + noise_var.ln()) - ((y - f_mean).powi(2) + f_var) / (2.0 * noise_var)
}

/// `E_{f ~ N(f_mean, f_var)}[log Φ(y f)]` by Gauss–Hermite quadrature.
pub fn probit_expected_loglik(f_mean: f64, f_var: f64, y: f64, order: usize) -> Result<f64> {
    let (nodes, weights) = gauss_hermite(order)?;
    Ok(probit_with_rule(f_mean, f_var, y, &nodes, &weights))
}

fn probit_with_rule(f_mean: f64, f_var: f64, y: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let spread = (2.0 * f_var).sqrt();
    let term = |k: usize| log_norm_cdf(y * (f_mean + spread * nodes[k]));
    // pair mirrored nodes so that flipping the label only reorders addends
    let n = nodes.len();
    let mut total = 0.0;
    for (k, w) in weights.iter().enumerate().take(n / 2) {
        total += w * (term(k) + term(n - 1 - k));
    }
    if n % 2 == 1 {
        total += weights[n / 2] * term(n / 2);
    }
    total / PI.sqrt()
}

/// `(1/α) log E_{f ~ N(f_mean, f_var)}[N(y | f, noise_var)^α]`.
pub fn alpha_log_density(y: f64, f_mean: f64, f_var: f64, noise_var: f64, alpha: f64) -> f64 {
    let total = noise_var + alpha * f_var;
    -0.5 * (LN_2PI + noise_var.ln()) + (noise_var / total).ln() / (2.0 * alpha) - (y - f_mean).powi(2) / (2.0 * total)
}

/// `P(y = +1)` when `f ~ N(f_mean, f_var)`.
pub fn probit_class_probability(f_mean: f64, f_var: f64) -> f64 {
    norm_cdf(f_mean / (1.0 + f_var).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Likelihood {
    Gaussian { log_var: ParamId },
    Probit { order: usize, nodes: Vec<f64>, weights: Vec<f64> },
}

impl Likelihood {
    pub fn gaussian(store: &mut ParamStore) -> Self {
        Likelihood::Gaussian { log_var: store.add("lik.log_var", Tensor::from_shape([1], vec![INIT_LIK_VAR.ln()])) }
    }

    pub fn probit(order: usize) -> Result<Self> {
        let (nodes, weights) = gauss_hermite(order)?;
        Ok(Likelihood::Probit { order, nodes, weights })
    }

    pub fn noise_var(&self, store: &ParamStore) -> Option<f64> {
        match self {
            Likelihood::Gaussian { log_var } => Some(store.get(*log_var).item().exp()),
            Likelihood::Probit { .. } => None,
        }
    }

    /// Per-point expected log-likelihood, `B x 1`, for `B x 1` means,
    /// variances and targets.
    pub fn expected_loglik<'t>(&self, params: &Bound<'t>, means: Var<'t>, vars: Var<'t>, y: Var<'t>) -> Var<'t> {
        match self {
            Likelihood::Gaussian { log_var } => {
                let log_var = params[*log_var];
                let resid = (y - means).square() + vars;
                (resid * log_var.neg().exp()).scale(-0.5) - (log_var.add_scalar(LN_2PI)).scale(0.5)
            }
            Likelihood::Probit { nodes, weights, .. } => {
                let tape = means.tape();
                let k = nodes.len();
                let t = tape.constant(Tensor::from_shape([1, k], nodes.clone()));
                let w = tape.constant(Tensor::from_shape([k, 1], weights.iter().map(|w| w / PI.sqrt()).collect()));
                let f = means + vars.scale(2.0).sqrt() * t;
                (f * y).log_ndtr().matmul(w)
            }
        }
    }

    /// Per-point α-energy term, `B x 1`. Gaussian likelihood only.
    pub fn alpha_term<'t>(&self, params: &Bound<'t>, means: Var<'t>, vars: Var<'t>, y: Var<'t>, alpha: f64) -> Result<Var<'t>> {
        let Likelihood::Gaussian { log_var } = self else {
            return Err(Error::Contract("the α-energy needs a Gaussian likelihood".into()));
        };
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Contract(format!("α must lie in (0, 1], got {alpha}")));
        }
        let log_var = params[*log_var];
        let noise = log_var.exp();
        let total = noise + vars.scale(alpha);
        let log_ratio = (log_var - total.ln()).scale(1.0 / (2.0 * alpha));
        Ok(log_ratio - (log_var.add_scalar(LN_2PI)).scale(0.5) - ((y - means).square() / total).scale(0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::rng::{self, Domain};

    #[test]
    fn two_point_rule() {
        let (x, w) = gauss_hermite(2).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        for wk in w {
            assert!((wk - PI.sqrt() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for order in [2, 3, 5, 10, 20, 33, 50, 64, 100] {
            let (x, w) = gauss_hermite(order).unwrap();
            let total: f64 = w.iter().sum();
            assert!((total - PI.sqrt()).abs() < 1e-12, "order {order}: {total}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn second_moment_with_three_nodes() {
        let (x, w) = gauss_hermite(3).unwrap();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_bounds() {
        assert!(gauss_hermite(1).is_err());
        assert!(gauss_hermite(101).is_err());
    }

    #[test]
    fn random_polynomial_moments() {
        // ∫ x^{2k} e^{-x²} = Γ(k + 1/2) = √π (2k-1)!! / 2^k; odd moments vanish
        let moment = |p: usize| -> f64 {
            if p % 2 == 1 {
                return 0.0;
            }
            let k = p / 2;
            let mut m = PI.sqrt();
            for j in 0..k {
                m *= (2 * j + 1) as f64 / 2.0;
            }
            m
        };
        let coeffs = rng::normals(&mut rng::stream(3, Domain::Test, &[0]), 16);
        let exact: f64 = coeffs.iter().enumerate().map(|(p, c)| c * moment(p)).sum();
        let (x, w) = gauss_hermite(20).unwrap();
        let quad: f64 = x.iter().zip(&w).map(|(x, w)| w * coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)).sum();
        assert!((quad - exact).abs() < 1e-10 * exact.abs().max(1.0), "{quad} vs {exact}");
    }

    #[test]
    fn gaussian_expected_log_density_values() {
        assert!((gaussian_log_density(0.3, 0.3, 0.0, 1.0) + 0.5 * LN_2PI).abs() < 1e-15);
        let direct = -0.5 * (2.0 * PI * 0.4f64).ln() - (1.0 - 0.2f64).powi(2) / 0.8;
        assert!((gaussian_log_density(1.0, 0.2, 0.0, 0.4) - direct).abs() < 1e-14);
    }

    #[test]
    fn gaussian_expectation_matches_monte_carlo() {
        let (y, m, v, s2): (f64, f64, f64, f64) = (0.7, -0.2, 0.5, 0.3);
        let n = 1_000_000;
        let z = rng::normals(&mut rng::stream(11, Domain::Test, &[1]), n);
        let vals: Vec<f64> = z.iter().map(|z| gaussian_log_density(y, m + v.sqrt() * z, 0.0, s2)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - gaussian_log_density(y, m, v, s2)).abs() < 3.0 * se);
    }

    #[test]
    fn probit_special_points() {
        for y in [-1.0, 1.0] {
            let v = probit_expected_loglik(0.0, 0.0, y, 20).unwrap();
            assert!((v - 0.5f64.ln()).abs() < 1e-15);
        }
        let v = probit_expected_loglik(8.0, 0.0, 1.0, 20).unwrap();
        assert!((v - log_norm_cdf(8.0)).abs() < 1e-6 && v.abs() < 1e-6);
    }

    #[test]
    fn probit_label_symmetry_is_exact() {
        for &(m, v) in &[(0.3, 0.2), (-2.0, 4.0), (4.5, 0.0)] {
            let a = probit_expected_loglik(m, v, -1.0, 20).unwrap();
            let b = probit_expected_loglik(-m, v, 1.0, 20).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn probit_matches_refined_integration() {
        // composite Simpson on a wide window as the refinement oracle
        for &(m, v, y) in &[(0.5, 1.2, 1.0), (-1.5, 0.3, 1.0), (2.0, 3.0, -1.0)] {
            let sd: f64 = f64::sqrt(v);
            let (a, b, n) = (m - 12.0 * sd, m + 12.0 * sd, 200_000);
            let h = (b - a) / n as f64;
            let g = |f: f64| log_norm_cdf(y * f) * (-(f - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
            let mut s = g(a) + g(b);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + i as f64 * h);
            }
            let simpson = s * h / 3.0;
            let quad = probit_expected_loglik(m, v, y, 50).unwrap();
            assert!((simpson - quad).abs() < 1e-6, "{simpson} vs {quad}");
        }
    }

    #[test]
    fn alpha_term_identities() {
        let (y, m, s2) = (0.4, -0.3, 0.25);
        for alpha in [1e-3, 0.5, 1.0] {
            let d = alpha_log_density(y, m, 0.0, s2, alpha);
            assert!((d - gaussian_log_density(y, m, 0.0, s2)).abs() < 1e-12);
        }
        let v = 0.6;
        let marginal = -0.5 * (2.0 * PI * (s2 + v)).ln() - (y - m).powi(2) / (2.0 * (s2 + v));
        assert!((alpha_log_density(y, m, v, s2, 1.0) - marginal).abs() < 1e-12);
    }

    #[test]
    fn tape_versions_match_scalar_versions() {
        let mut store = ParamStore::new();
        let lik = Likelihood::gaussian(&mut store);
        let probit = Likelihood::probit(20).unwrap();
        let tape = Tape::new();
        let params = store.bind(&tape);
        let m = tape.constant(Tensor::from_shape([3, 1], vec![0.1, -1.0, 2.0]));
        let v = tape.constant(Tensor::from_shape([3, 1], vec![0.5, 0.0, 1.5]));
        let y = tape.constant(Tensor::from_shape([3, 1], vec![0.3, -0.6, 1.0]));
        let labels = tape.constant(Tensor::from_shape([3, 1], vec![1.0, -1.0, 1.0]));
        let g = lik.expected_loglik(&params, m, v, y).value();
        let p = probit.expected_loglik(&params, m, v, labels).value();
        let a = lik.alpha_term(&params, m, v, y, 0.5).unwrap().value();
        for n in 0..3 {
            let (mn, vn) = (m.value().data()[n], v.value().data()[n]);
            let yn = y.value().data()[n];
            assert!((g.data()[n] - gaussian_log_density(yn, mn, vn, INIT_LIK_VAR)).abs() < 1e-12);
            assert!((a.data()[n] - alpha_log_density(yn, mn, vn, INIT_LIK_VAR, 0.5)).abs() < 1e-12);
            let pn = probit_expected_loglik(mn, vn, labels.value().data()[n], 20).unwrap();
            assert!((p.data()[n] - pn).abs() < 1e-12);
        }
        assert!(lik.alpha_term(&params, m, v, y, 0.0).is_err());
        assert!(probit.alpha_term(&params, m, v, y, 0.5).is_err());
    }

    #[test]
    fn class_probability_matches_quadrature() {
        let (x, w) = gauss_hermite(50).unwrap();
        let (m, v): (f64, f64) = (0.7, 2.0);
        let quad: f64 = x.iter().zip(&w).map(|(t, w)| w * norm_cdf(m + (2.0 * v).sqrt() * t)).sum::<f64>() / PI.sqrt();
        assert!((quad - probit_class_probability(m, v)).abs() < 1e-10);
    }
}
