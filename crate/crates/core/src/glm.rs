//! Logistic regression with a fixed offset, fitted by iteratively
//! reweighted least squares.
//!
//! This is the β half of the complete-data maximization: with the latent
//! variables imputed, the terms of the complete-data log-likelihood that
//! involve β are exactly a logistic GLM log-likelihood with offset Zu.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{expit, log1p_exp, log1p_exp_expit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("IRLS did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("coefficients diverging (|beta|_inf = {norm:.3e}): data are separable")]
    Separation { norm: f64 },
    #[error("weighted normal equations are singular")]
    RankDeficient,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsConfig {
    pub max_iterations: usize,
    /// Relative change in β that counts as converged.
    pub tolerance: f64,
    /// β with a larger sup-norm is reported as separation.
    pub divergence_norm: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            tolerance: 1e-8,
            divergence_norm: 1e3,
        }
    }
}

/// Σ_i [y_i η_i − log(1 + e^{η_i})] with η = Xβ + offset.
pub fn offset_loglik(y: &DVector<f64>, x: &DMatrix<f64>, offset: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta + offset;
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| yi * e - log1p_exp(e))
        .sum()
}

/// Score Xᵀ(y − expit(Xβ + offset)).
pub fn offset_score(y: &DVector<f64>, x: &DMatrix<f64>, offset: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta + offset;
    let resid = DVector::from_iterator(
        y.len(),
        y.iter().zip(eta.iter()).map(|(&yi, &e)| yi - expit(e)),
    );
    x.tr_mul(&resid)
}

/// Maximum-likelihood β for a logistic regression with a known offset.
pub fn fit_logistic_offset(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    offset: &DVector<f64>,
    config: &IrlsConfig,
) -> Result<DVector<f64>, GlmError> {
    let (n, p) = x.shape();
    if y.len() != n || offset.len() != n {
        return Err(GlmError::DimensionMismatch(format!(
            "X is {n}x{p} but y has {} and offset {} entries",
            y.len(),
            offset.len()
        )));
    }

    // Objective and fitted probabilities in one pass.
    let evaluate = |beta: &DVector<f64>| {
        let eta = x * beta + offset;
        let mut loglik = 0.0;
        let mu = DVector::from_iterator(
            n,
            y.iter().zip(eta.iter()).map(|(&yi, &e)| {
                let (l, m) = log1p_exp_expit(e);
                loglik += yi * e - l;
                m
            }),
        );
        (loglik, mu)
    };

    let mut beta = DVector::zeros(p);
    let (mut loglik, mut fitted) = evaluate(&beta);
    for _ in 0..config.max_iterations {
        let mut xtwx = DMatrix::zeros(p, p);
        let mut score = DVector::zeros(p);
        for i in 0..n {
            let mu = fitted[i];
            let w = mu * (1.0 - mu);
            let r = y[i] - mu;
            for a in 0..p {
                score[a] += x[(i, a)] * r;
                let xa = w * x[(i, a)];
                for b in 0..=a {
                    xtwx[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let step: DVector<f64> = xtwx
            .cholesky()
            .ok_or(GlmError::RankDeficient)?
            .solve(&score);
        if step.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::RankDeficient);
        }

        // Step halving while the objective decreases.
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let (mut candidate_loglik, mut candidate_fitted) = evaluate(&candidate);
        // Differences at rounding level near the optimum are not decreases.
        let slack = 1e-12 * (1.0 + loglik.abs());
        let mut halvings = 0;
        while candidate_loglik < loglik - slack && halvings < 30 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            (candidate_loglik, candidate_fitted) = evaluate(&candidate);
            halvings += 1;
        }

        let change = (&candidate - &beta).amax();
        beta = candidate;
        loglik = candidate_loglik;
        fitted = candidate_fitted;

        let norm = beta.amax();
        if norm > config.divergence_norm {
            return Err(GlmError::Separation { norm });
        }
        if change <= config.tolerance * norm.max(1.0) {
            return Ok(beta);
        }
    }

    // Newton on separable data creeps towards infinity by O(1) per step; the
    // fitted probabilities pin to the responses long before |β| is large.
    let eta = x * &beta + offset;
    let pinned = y
        .iter()
        .zip(eta.iter())
        .any(|(&yi, &e)| (yi - expit(e)).abs() < 1e-8);
    if pinned {
        Err(GlmError::Separation { norm: beta.amax() })
    } else {
        Err(GlmError::NonConvergence {
            iterations: config.max_iterations,
        })
    }
}
