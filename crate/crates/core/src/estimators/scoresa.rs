use nalgebra::DVector;

use super::{
    step_size, Algorithm, EstimatorError, FailureKind, Imputer, MalaImputer, RunConfig, RunTrace,
};
use crate::model::{score_gradient, GlmmData, Theta};

/// Runs halt as diverged once any |τ_k| exceeds this.
pub const MAX_ABS_LOG_SIGMA: f64 = 20.0;
/// Runs halt as diverged once ‖β‖∞ exceeds this.
pub const MAX_ABS_BETA: f64 = 1e3;

/// Score-equation SA with multiple imputation, variance components on the
/// log σ scale.
pub fn run_scoresa(config: &RunConfig, data: &GlmmData) -> Result<RunTrace, EstimatorError> {
    config.validate(data)?;
    let mut imputer = MalaImputer::new(config, data)?;
    run_scoresa_with(config, data, &mut imputer)
}

pub fn run_scoresa_with<I: Imputer + ?Sized>(
    config: &RunConfig,
    data: &GlmmData,
    imputer: &mut I,
) -> Result<RunTrace, EstimatorError> {
    config.validate(data)?;
    if config.algorithm != Algorithm::ScoreSa {
        return Err(EstimatorError::InvalidConfig(format!(
            "run_scoresa called with {:?}",
            config.algorithm
        )));
    }
    let mut theta = config.theta_init.clone();
    let mut trace = RunTrace::new(theta.clone(), config.iterations);

    for t in 1..=config.iterations {
        let us = match imputer.impute(&theta, data, t) {
            Ok(us) => us,
            Err(e) => {
                trace.fail(t, FailureKind::Sampler, e.to_string());
                break;
            }
        };
        let mut g = DVector::zeros(theta.dim());
        for u in &us {
            g += score_gradient(&theta, u, data)?;
        }
        g /= us.len() as f64;
        let gamma = step_size(t, config.schedule);
        let next = theta.to_vector() + &g * gamma;
        theta = Theta::from_vector(&next, data.p(), theta.scale);
        trace.push(theta.clone(), g.amax(), imputer.acceptance_rate());

        let diverged = !next.iter().all(|v| v.is_finite())
            || theta.beta.amax() > MAX_ABS_BETA
            || theta.var_components.amax() > MAX_ABS_LOG_SIGMA;
        if diverged {
            trace.fail(
                t,
                FailureKind::Diverged,
                format!(
                    "|beta|_inf = {:.3e}, |log sigma|_inf = {:.3e}",
                    theta.beta.amax(),
                    theta.var_components.amax()
                ),
            );
            break;
        }
    }
    Ok(trace)
}
