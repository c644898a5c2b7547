//! IMSA with single-pass variance estimation.
//!
//! Alongside the IMSA iterate the run tracks online averages of the update
//! r = θ_{t−1/2} − θ_{t−1}, its covariance R̄, and the complete-data
//! information H̄, and reports [H̄(I − R̄H̄)]⁻¹ as the variance of the limit.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{
    averaged_maximizer, shrink, step_size, Algorithm, EstimatorError, FailureKind, Imputer,
    MalaImputer, RunConfig, RunTrace, StepSchedule,
};
use crate::model::{complete_hessian, GlmmData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarianceError {
    #[error("variance estimate unavailable: {0}")]
    VarianceEstimateUnavailable(String),
}

/// Step sizes ρ_t, λ_t, ν_t of the three accumulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceSchedules {
    pub rho: StepSchedule,
    pub lambda: StepSchedule,
    pub nu: StepSchedule,
}

impl Default for VarianceSchedules {
    fn default() -> Self {
        Self {
            rho: StepSchedule::Harmonic,
            lambda: StepSchedule::Harmonic,
            nu: StepSchedule::Harmonic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceAccumulators {
    pub r_bar: DVector<f64>,
    pub r_cov: DMatrix<f64>,
    pub h_bar: DMatrix<f64>,
    pub schedules: VarianceSchedules,
    /// Updates applied so far.
    pub t: usize,
}

impl VarianceAccumulators {
    pub fn new(dim: usize, schedules: VarianceSchedules) -> Self {
        Self {
            r_bar: DVector::zeros(dim),
            r_cov: DMatrix::zeros(dim, dim),
            h_bar: DMatrix::zeros(dim, dim),
            schedules,
            t: 0,
        }
    }

    /// One step of the recursions:
    ///
    /// ```text
    /// r̄_t = r̄ + ρ(r − r̄)
    /// R̄_t = R̄ + λ((1 − λ)(r − r̄)(r − r̄)ᵀ − R̄)
    /// H̄_t = H̄ + ν(H − H̄)
    /// ```
    ///
    /// with r̄ the value before this step.
    pub fn update(&mut self, r: &DVector<f64>, h: &DMatrix<f64>) {
        self.t += 1;
        let rho = step_size(self.t, self.schedules.rho);
        let lambda = step_size(self.t, self.schedules.lambda);
        let nu = step_size(self.t, self.schedules.nu);
        let d = r - &self.r_bar;
        let outer = &d * d.transpose();
        self.r_cov += (outer * (1.0 - lambda) - &self.r_cov) * lambda;
        self.r_bar += d * rho;
        self.h_bar += (h - &self.h_bar) * nu;
    }

    /// [H̄(I − R̄H̄)]⁻¹. The bracket is symmetric in exact arithmetic
    /// (H̄ − H̄R̄H̄) and is symmetrized before inversion.
    pub fn variance_estimate(&self) -> Result<DMatrix<f64>, VarianceError> {
        let dim = self.h_bar.nrows();
        let inner = DMatrix::identity(dim, dim) - &self.r_cov * &self.h_bar;
        let m = &self.h_bar * inner;
        let m = (&m + m.transpose()) * 0.5;
        let inv = m.clone().try_inverse().ok_or_else(|| {
            VarianceError::VarianceEstimateUnavailable("H̄(I − R̄H̄) is singular".into())
        })?;
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(VarianceError::VarianceEstimateUnavailable(
                "non-finite inverse".into(),
            ));
        }
        Ok(inv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRun {
    pub trace: RunTrace,
    pub accumulators: VarianceAccumulators,
    /// r at every completed iteration.
    pub r_history: Vec<DVector<f64>>,
    /// H at every completed iteration.
    pub h_history: Vec<DMatrix<f64>>,
    pub variance: Result<DMatrix<f64>, VarianceError>,
}

pub fn run_imsa_variance(
    config: &RunConfig,
    data: &GlmmData,
    schedules: VarianceSchedules,
) -> Result<VarianceRun, EstimatorError> {
    config.validate(data)?;
    let mut imputer = MalaImputer::new(config, data)?;
    run_imsa_variance_with(config, data, schedules, &mut imputer)
}

/// Single-chain IMSA with the variance accumulators. H is the negative
/// complete-data Hessian at θ_{t−1} on the run's update scale.
pub fn run_imsa_variance_with<I: Imputer + ?Sized>(
    config: &RunConfig,
    data: &GlmmData,
    schedules: VarianceSchedules,
    imputer: &mut I,
) -> Result<VarianceRun, EstimatorError> {
    config.validate(data)?;
    if !matches!(config.algorithm, Algorithm::Imsa | Algorithm::ImsaLog) {
        return Err(EstimatorError::InvalidConfig(
            "variance estimation runs IMSA or IMSA-log".into(),
        ));
    }
    if config.chains != 1 {
        return Err(EstimatorError::InvalidConfig(format!(
            "variance estimation is single-chain, got {} chains",
            config.chains
        )));
    }
    let scale = config.algorithm.scale();
    let mut theta = config.theta_init.clone();
    let mut trace = RunTrace::new(theta.clone(), config.iterations);
    let mut acc = VarianceAccumulators::new(theta.dim(), schedules);
    let mut r_history = Vec::with_capacity(config.iterations);
    let mut h_history = Vec::with_capacity(config.iterations);

    for t in 1..=config.iterations {
        let us = match imputer.impute(&theta, data, t) {
            Ok(us) => us,
            Err(e) => {
                trace.fail(t, FailureKind::Sampler, e.to_string());
                break;
            }
        };
        let half = match averaged_maximizer(&us, data, scale) {
            Ok(h) => h,
            Err(e) => {
                trace.fail(t, FailureKind::MStep, e.to_string());
                break;
            }
        };
        let r = half.to_vector() - theta.to_vector();
        let h = complete_hessian(&theta, &us[0], data)?;
        acc.update(&r, &h);
        let norm = r.amax();
        r_history.push(r);
        h_history.push(h);
        theta = shrink(&theta, &half, step_size(t, config.schedule));
        trace.push(theta.clone(), norm, imputer.acceptance_rate());
    }

    let variance = if acc.t == 0 {
        Err(VarianceError::VarianceEstimateUnavailable(
            "no completed iterations".into(),
        ))
    } else {
        acc.variance_estimate()
    };
    Ok(VarianceRun {
        trace,
        accumulators: acc,
        r_history,
        h_history,
        variance,
    })
}
