use nalgebra::DVector;

use super::{
    averaged_maximizer, shrink, step_size, Algorithm, EstimatorError, FailureKind, Imputer,
    MalaImputer, RunConfig, RunTrace, StepSchedule,
};
use crate::model::{GlmmData, Scale, Theta};

/// IMSA with multiple imputation on the scale given by `config.algorithm`
/// (`Imsa`: σ², `ImsaLog`: log σ).
pub fn run_imsa(config: &RunConfig, data: &GlmmData) -> Result<RunTrace, EstimatorError> {
    config.validate(data)?;
    let mut imputer = MalaImputer::new(config, data)?;
    run_imsa_with(config, data, &mut imputer)
}

pub fn run_imsa_with<I: Imputer + ?Sized>(
    config: &RunConfig,
    data: &GlmmData,
    imputer: &mut I,
) -> Result<RunTrace, EstimatorError> {
    config.validate(data)?;
    if config.algorithm == Algorithm::ScoreSa {
        return Err(EstimatorError::InvalidConfig(
            "run_imsa needs an imputation-maximization algorithm".into(),
        ));
    }
    let scale = config.algorithm.scale();
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
        let half = match averaged_maximizer(&us, data, scale) {
            Ok(h) => h,
            Err(e) => {
                trace.fail(t, FailureKind::MStep, e.to_string());
                break;
            }
        };
        let norm = (half.to_vector() - theta.to_vector()).amax();
        theta = shrink(&theta, &half, step_size(t, config.schedule));
        trace.push(theta.clone(), norm, imputer.acceptance_rate());
    }
    Ok(trace)
}

/// IM run: the trace plus the post-burn-in average of θ_t.
#[derive(Debug, Clone, PartialEq)]
pub struct ImRun {
    pub trace: RunTrace,
    /// Mean of θ_t over t > burn-in, on the σ² scale. `None` when the run
    /// failed before passing the burn-in.
    pub estimate: Option<Theta>,
}

pub fn run_im(config: &RunConfig, data: &GlmmData) -> Result<ImRun, EstimatorError> {
    config.validate(data)?;
    let mut imputer = MalaImputer::new(config, data)?;
    run_im_with(config, data, &mut imputer)
}

/// IM is IMSA on the σ² scale with γ_t ≡ 1.
pub fn run_im_with<I: Imputer + ?Sized>(
    config: &RunConfig,
    data: &GlmmData,
    imputer: &mut I,
) -> Result<ImRun, EstimatorError> {
    if config.algorithm != Algorithm::Im {
        return Err(EstimatorError::InvalidConfig(format!(
            "run_im called with {:?}",
            config.algorithm
        )));
    }
    let mut cfg = config.clone();
    cfg.schedule = StepSchedule::Constant(1.0);
    let trace = run_imsa_with(&cfg, data, imputer)?;
    let burn_in = config.burn_in.unwrap_or(config.iterations / 2);
    let kept = &trace.theta_series[burn_in.min(trace.len())..];
    let estimate = (!kept.is_empty()).then(|| {
        let mean = kept
            .iter()
            .fold(DVector::zeros(kept[0].dim()), |acc, th| acc + th.to_vector())
            / kept.len() as f64;
        Theta::from_vector(&mean, data.p(), Scale::OriginalSigma2)
    });
    Ok(ImRun { trace, estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SamplerError;
    use crate::simulate::gen_booth_hobert;

    /// Returns the same latent vectors every iteration.
    struct Fixed(Vec<DVector<f64>>);

    impl Imputer for Fixed {
        fn impute(
            &mut self,
            _: &Theta,
            _: &GlmmData,
            _: usize,
        ) -> Result<Vec<DVector<f64>>, SamplerError> {
            Ok(self.0.clone())
        }
        fn acceptance_rate(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn zero_gain_keeps_initial_value() {
        let sim = gen_booth_hobert(5.0, 0.5, 11);
        let init = Theta::from_sigma2(&[1.5], &[1.0]);
        let mut cfg = RunConfig::new(Algorithm::Imsa, init.clone(), 3);
        cfg.schedule = StepSchedule::Constant(0.0);
        cfg.iterations = 20;
        let trace = run_imsa(&cfg, &sim.data).unwrap();
        assert!(trace.failure.is_none());
        assert!(trace.theta_series.iter().all(|th| *th == init));
    }

    #[test]
    fn unit_gain_replaces_with_half_step() {
        let sim = gen_booth_hobert(5.0, 0.5, 12);
        let us = vec![sim.true_u.clone(), sim.true_u.map(|v| 0.5 * v)];
        let half = averaged_maximizer(&us, &sim.data, Scale::OriginalSigma2).unwrap();
        let mut cfg = RunConfig::new(Algorithm::Im, Theta::from_sigma2(&[1.0], &[1.0]), 0);
        cfg.iterations = 10;
        let run = run_im_with(&cfg, &sim.data, &mut Fixed(us)).unwrap();
        assert!(run.trace.theta_series.iter().all(|th| *th == half));
        assert_eq!(run.estimate.unwrap(), half);
    }

    #[test]
    fn im_matches_imsa_with_unit_gain() {
        let sim = gen_booth_hobert(5.0, 0.5, 13);
        let init = Theta::from_sigma2(&[1.2], &[0.8]);
        let mut im = RunConfig::new(Algorithm::Im, init.clone(), 99);
        im.iterations = 60;
        let mut imsa = im.clone();
        imsa.algorithm = Algorithm::Imsa;
        imsa.schedule = StepSchedule::Constant(1.0);
        let a = run_im(&im, &sim.data).unwrap().trace;
        let b = run_imsa(&imsa, &sim.data).unwrap();
        assert_eq!(a.theta_series, b.theta_series);
    }

    #[test]
    fn original_scale_iterates_stay_positive() {
        let sim = gen_booth_hobert(5.0, 0.5, 14);
        let mut cfg = RunConfig::new(Algorithm::Imsa, Theta::from_sigma2(&[1.0], &[1.5]), 4);
        cfg.iterations = 300;
        let trace = run_imsa(&cfg, &sim.data).unwrap();
        assert!(trace.failure.is_none());
        assert!(trace
            .theta_series
            .iter()
            .all(|th| th.var_components[0] >= super::super::VARIANCE_FLOOR));
    }
}
