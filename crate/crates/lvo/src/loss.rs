//! Bivariate-Gaussian translation loss and the sampling predictor.
//!
//! The network expresses planar translation (x, z) as a full bivariate
//! Gaussian — means, scales, and correlation — trained by negative
//! log-likelihood. Height and rotation are penalized by plain L2 distance.
//! Raw regressor outputs are mapped to valid distribution parameters by
//! [`raw_to_gaussian`]; [`loss_gradients`] provides the exact derivative of
//! the per-sample objective with respect to those raw outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RelativePose;

/// Lower clamp for the Gaussian scales.
pub const SIGMA_MIN: f64 = 1e-4;
/// Upper clamp for the Gaussian scales.
pub const SIGMA_MAX: f64 = 1e3;
/// Correlation is squashed into (-RHO_SCALE, RHO_SCALE) to keep the
/// covariance strictly positive definite.
pub const RHO_SCALE: f64 = 0.999;

/// Planar-translation distribution: mean, per-axis scale, correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPose2D {
    pub mu_x: f64,
    pub mu_z: f64,
    pub sigma_x: f64,
    pub sigma_z: f64,
    pub rho: f64,
}

impl GaussianPose2D {
    pub fn new(mu_x: f64, mu_z: f64, sigma_x: f64, sigma_z: f64, rho: f64) -> Result<Self> {
        let g = GaussianPose2D { mu_x, mu_z, sigma_x, sigma_z, rho };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu_x.is_finite() && self.mu_z.is_finite()) {
            return Err(Error::invalid("Gaussian means must be finite"));
        }
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite())
            || !(self.sigma_z > 0.0 && self.sigma_z.is_finite())
        {
            return Err(Error::invalid(format!(
                "Gaussian scales must be positive and finite, got ({}, {})",
                self.sigma_x, self.sigma_z
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::invalid(format!(
                "correlation must satisfy |rho| < 1, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Weights of the combined objective: height term, rotation term, and the
/// squared-parameter-norm regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 10.0,
            lambda3: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// How to turn a predicted distribution into a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    /// Monte Carlo sample count for the sampling estimator.
    pub n_samples: usize,
    pub seed: u64,
    /// Skip sampling and return the mean directly.
    pub deterministic: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            n_samples: 10_000,
            seed: 0,
            deterministic: false,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be >= 1"));
        }
        Ok(())
    }
}

/// Raw regressor outputs, in order: `[mu_x, mu_z, raw_sigma_x, raw_sigma_z,
/// raw_rho, y]`. Means and height pass through; scales go through a clamped
/// exponential; the correlation through a scaled tanh. Returns the
/// distribution and the height estimate.
pub fn raw_to_gaussian(raw: &[f64; 6]) -> Result<(GaussianPose2D, f64)> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("raw regressor outputs must be finite"));
    }
    let g = GaussianPose2D {
        mu_x: raw[0],
        mu_z: raw[1],
        sigma_x: raw[2].exp().clamp(SIGMA_MIN, SIGMA_MAX),
        sigma_z: raw[3].exp().clamp(SIGMA_MIN, SIGMA_MAX),
        rho: RHO_SCALE * raw[4].tanh(),
    };
    g.validate()?;
    Ok((g, raw[5]))
}

/// Negative log-density of the bivariate Gaussian at `(x, z)`:
/// `log(2*pi) + log(sigma_x*sigma_z) + log(1-rho^2)/2 + q/(2*(1-rho^2))`
/// with `q = a^2 - 2*rho*a*b + b^2`, `a = (x-mu_x)/sigma_x`,
/// `b = (z-mu_z)/sigma_z`.
pub fn bivariate_nll(g: &GaussianPose2D, x: f64, z: f64) -> Result<f64> {
    g.validate()?;
    if !(x.is_finite() && z.is_finite()) {
        return Err(Error::invalid("NLL evaluation point must be finite"));
    }
    let a = (x - g.mu_x) / g.sigma_x;
    let b = (z - g.mu_z) / g.sigma_z;
    let one_minus_r2 = 1.0 - g.rho * g.rho;
    let q = a * a - 2.0 * g.rho * a * b + b * b;
    Ok((2.0 * std::f64::consts::PI).ln()
        + (g.sigma_x * g.sigma_z).ln()
        + 0.5 * one_minus_r2.ln()
        + q / (2.0 * one_minus_r2))
}

/// Full batch objective: sum over samples of
/// `NLL + lambda1*|y_p - y_gt| + lambda2*|euler_p - euler_gt|_2`,
/// plus `lambda3 * params_sq_norm` once. `outputs` holds per-sample
/// `(distribution, predicted height, predicted Euler angles)`.
pub fn total_loss(
    outputs: &[(GaussianPose2D, f64, [f64; 3])],
    ground_truth: &[RelativePose],
    weights: &LossWeights,
    params_sq_norm: f64,
) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::invalid("loss needs a non-empty batch"));
    }
    if outputs.len() != ground_truth.len() {
        return Err(Error::shape(format!(
            "{} outputs vs {} ground-truth poses",
            outputs.len(),
            ground_truth.len()
        )));
    }
    let mut sum = 0.0;
    for ((g, y_p, euler_p), gt) in outputs.iter().zip(ground_truth) {
        sum += bivariate_nll(g, gt.translation.x, gt.translation.z)?;
        sum += weights.lambda1 * (y_p - gt.translation.y).abs();
        let dr: f64 = euler_p
            .iter()
            .zip(gt.euler_zyx.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        sum += weights.lambda2 * dr.sqrt();
    }
    Ok(sum + weights.lambda3 * params_sq_norm)
}

/// Derivative of one sample's loss term with respect to the nine raw
/// regressor outputs: `[mu_x, mu_z, raw_sigma_x, raw_sigma_z, raw_rho, y,
/// e_z, e_y, e_x]`. The chain through the exp/tanh transforms of
/// [`raw_to_gaussian`] is included; scales pinned at their clamp boundary get
/// zero gradient.
pub fn loss_gradients(
    g: &GaussianPose2D,
    y_p: f64,
    euler_p: &[f64; 3],
    gt: &RelativePose,
    weights: &LossWeights,
) -> Result<[f64; 9]> {
    g.validate()?;
    let a = (gt.translation.x - g.mu_x) / g.sigma_x;
    let b = (gt.translation.z - g.mu_z) / g.sigma_z;
    let u = 1.0 - g.rho * g.rho;
    let q = a * a - 2.0 * g.rho * a * b + b * b;

    let d_mu_x = -(a - g.rho * b) / (u * g.sigma_x);
    let d_mu_z = -(b - g.rho * a) / (u * g.sigma_z);
    // d/d sigma times d sigma / d raw = sigma, so the sigma cancels; zero at
    // the clamp boundaries where the transform is flat.
    let interior = |s: f64| s > SIGMA_MIN && s < SIGMA_MAX;
    let d_raw_sx = if interior(g.sigma_x) {
        1.0 - a * (a - g.rho * b) / u
    } else {
        0.0
    };
    let d_raw_sz = if interior(g.sigma_z) {
        1.0 - b * (b - g.rho * a) / u
    } else {
        0.0
    };
    let d_rho = -g.rho / u - a * b / u + q * g.rho / (u * u);
    let tanh_val = g.rho / RHO_SCALE;
    let d_raw_rho = d_rho * RHO_SCALE * (1.0 - tanh_val * tanh_val);

    let dy = weights.lambda1 * (y_p - gt.translation.y).signum();
    let dy = if y_p == gt.translation.y { 0.0 } else { dy };

    let mut d_euler = [0.0; 3];
    let dr: f64 = euler_p
        .iter()
        .zip(gt.euler_zyx.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        .sqrt();
    if dr > 0.0 {
        for k in 0..3 {
            d_euler[k] = weights.lambda2 * (euler_p[k] - gt.euler_zyx[k]) / dr;
        }
    }

    Ok([
        d_mu_x, d_mu_z, d_raw_sx, d_raw_sz, d_raw_rho, dy, d_euler[0], d_euler[1], d_euler[2],
    ])
}

/// Deterministic point estimate: the distribution mean.
pub fn predict_translation_mean(g: &GaussianPose2D) -> (f64, f64) {
    (g.mu_x, g.mu_z)
}

/// Monte Carlo estimate: draw `n` samples through the closed-form 2x2
/// Cholesky factor of the covariance and return their mean.
pub fn sample_translation<R: Rng>(g: &GaussianPose2D, n: usize, rng: &mut R) -> Result<(f64, f64)> {
    g.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    // Sigma = L L^T with L = [[sx, 0], [rho*sz, sz*sqrt(1-rho^2)]].
    let l21 = g.rho * g.sigma_z;
    let l22 = g.sigma_z * (1.0 - g.rho * g.rho).sqrt();
    let mut sum_x = 0.0;
    let mut sum_z = 0.0;
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        sum_x += g.mu_x + g.sigma_x * z1;
        sum_z += g.mu_z + l21 * z1 + l22 * z2;
    }
    Ok((sum_x / n as f64, sum_z / n as f64))
}

/// Point estimate per the prediction config: the mean when `deterministic`,
/// otherwise the seeded sampling estimator.
pub fn predict_translation(g: &GaussianPose2D, cfg: &PredictConfig) -> Result<(f64, f64)> {
    if cfg.deterministic {
        g.validate()?;
        return Ok(predict_translation_mean(g));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_translation(g, cfg.n_samples, &mut rng)
}
