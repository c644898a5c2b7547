//! Stochastic-approximation estimators: IM, IMSA (σ² and log σ scales),
//! score-equation SA, and IMSA with online variance estimation.
//!
//! Every estimator alternates an imputation step, in which m Markov chains
//! targeting f(u | y; θ_{t−1}) are advanced, with a parameter update:
//!
//! * IMSA shrinks θ_{t−1} towards the chain-averaged complete-data maximizer
//!   θ_{t−1/2}: θ_t = θ_{t−1} + γ_t(θ_{t−1/2} − θ_{t−1}). IM is the γ_t ≡ 1
//!   special case.
//! * ScoreSA moves along the chain-averaged complete-data score:
//!   θ_t = θ_{t−1} + γ_t·g.

mod imsa;
mod scoresa;
mod variance;

pub use imsa::{run_im, run_im_with, run_imsa, run_imsa_with, ImRun};
pub use scoresa::{run_scoresa, run_scoresa_with, MAX_ABS_BETA, MAX_ABS_LOG_SIGMA};
pub use variance::{
    run_imsa_variance, run_imsa_variance_with, VarianceAccumulators, VarianceError, VarianceRun,
    VarianceSchedules,
};

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::glm::{fit_logistic_offset, GlmError, IrlsConfig};
use crate::model::{ConditionalPotential, GlmmData, ModelError, Scale, Theta};
use crate::rng::{self, purpose};
use crate::sampler::{
    adapt_step_size, build_preconditioner, pmala_sweep, ChainState, PreconditionMode,
    Preconditioner, SamplerError,
};

/// Smallest variance the M-step returns.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Gain sequence γ_t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// γ_t = 1/t
    Harmonic,
    /// γ_t = min(1/t, 1/t₀)
    Capped { t0: u32 },
    /// γ_t ≡ c
    Constant(f64),
}

/// γ_t for t ≥ 1.
pub fn step_size(t: usize, schedule: StepSchedule) -> f64 {
    debug_assert!(t >= 1);
    let t = t as f64;
    match schedule {
        StepSchedule::Harmonic => 1.0 / t,
        StepSchedule::Capped { t0 } => (1.0 / t).min(1.0 / t0 as f64),
        StepSchedule::Constant(c) => c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Im,
    Imsa,
    ImsaLog,
    ScoreSa,
}

impl Algorithm {
    /// Scale θ is updated on.
    pub fn scale(self) -> Scale {
        match self {
            Algorithm::Im | Algorithm::Imsa => Scale::OriginalSigma2,
            Algorithm::ImsaLog | Algorithm::ScoreSa => Scale::LogSigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    /// T
    pub iterations: usize,
    /// m
    pub chains: usize,
    /// N, MCMC steps per chain between parameter updates.
    pub mcmc_steps: usize,
    /// T0: iterations t ≤ T0 use the identity preconditioner.
    pub precondition_after: usize,
    pub target_accept: f64,
    /// Initial proposal step size ε of every chain.
    pub initial_step_size: f64,
    /// Parameter updates between step-size adaptations.
    pub adapt_every: usize,
    pub seed: u64,
    pub theta_init: Theta,
    /// IM only: iterations discarded before averaging. Defaults to T/2.
    pub burn_in: Option<usize>,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, theta_init: Theta, seed: u64) -> Self {
        let schedule = match algorithm {
            Algorithm::Im => StepSchedule::Constant(1.0),
            _ => StepSchedule::Harmonic,
        };
        Self {
            algorithm,
            schedule,
            iterations: 2000,
            chains: 4,
            mcmc_steps: 20,
            precondition_after: 500,
            target_accept: 0.6,
            initial_step_size: 0.5,
            adapt_every: 50,
            seed,
            theta_init,
            burn_in: None,
        }
    }

    pub fn validate(&self, data: &GlmmData) -> Result<(), EstimatorError> {
        let bad = |msg: String| Err(EstimatorError::InvalidConfig(msg));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.chains < 1 {
            return bad("chains must be at least 1".into());
        }
        if self.mcmc_steps < 1 {
            return bad("mcmc_steps must be at least 1".into());
        }
        if self.adapt_every < 1 {
            return bad("adapt_every must be at least 1".into());
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!("target_accept {} not in (0, 1)", self.target_accept));
        }
        if !(self.initial_step_size > 0.0 && self.initial_step_size.is_finite()) {
            return bad("initial_step_size must be positive".into());
        }
        match self.schedule {
            StepSchedule::Capped { t0 } if t0 < 1 => return bad("t0 must be at least 1".into()),
            StepSchedule::Constant(c) if !c.is_finite() => {
                return bad("constant step size must be finite".into())
            }
            _ => {}
        }
        if self.theta_init.scale != self.algorithm.scale() {
            return bad(format!(
                "{:?} updates on the {:?} scale but theta_init is on {:?}",
                self.algorithm,
                self.algorithm.scale(),
                self.theta_init.scale
            ));
        }
        if let Some(b) = self.burn_in {
            if b >= self.iterations {
                return bad(format!("burn_in {b} leaves no iterations to average"));
            }
        }
        data.check_theta(&self.theta_init)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// The sampler reached a non-finite state.
    Sampler,
    /// The complete-data maximization failed.
    MStep,
    /// Parameters left the divergence bounds.
    Diverged,
}

impl FailureKind {
    pub fn tag(self) -> &'static str {
        match self {
            FailureKind::Sampler => "sampler",
            FailureKind::MStep => "mstep",
            FailureKind::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    /// Iteration t at which the run halted.
    pub iteration: usize,
    pub kind: FailureKind,
    pub message: String,
}

/// Audit trail of one run. Entry t−1 of each series belongs to iteration t.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub theta_series: Vec<Theta>,
    /// ‖θ_{t−1/2} − θ_{t−1}‖∞ for IMSA-type runs, ‖g‖∞ for ScoreSA.
    pub update_norms: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
    pub final_theta: Theta,
    pub failure: Option<RunFailure>,
}

impl RunTrace {
    fn new(theta_init: Theta, capacity: usize) -> Self {
        Self {
            theta_series: Vec::with_capacity(capacity),
            update_norms: Vec::with_capacity(capacity),
            acceptance_rates: Vec::with_capacity(capacity),
            final_theta: theta_init,
            failure: None,
        }
    }

    fn push(&mut self, theta: Theta, norm: f64, acceptance: f64) {
        self.final_theta = theta.clone();
        self.theta_series.push(theta);
        self.update_norms.push(norm);
        self.acceptance_rates.push(acceptance);
    }

    fn fail(&mut self, iteration: usize, kind: FailureKind, message: impl Into<String>) {
        self.failure = Some(RunFailure {
            iteration,
            kind,
            message: message.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.theta_series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_series.is_empty()
    }
}

/// argmax_θ log f(y, u; θ): β from the logistic GLM with offset Zu and
/// σ̃²_k = [u^(k)]ᵀu^(k)/q_k, floored at [`VARIANCE_FLOOR`].
pub fn maximize_complete(u: &DVector<f64>, data: &GlmmData) -> Result<Theta, GlmError> {
    if u.len() != data.q() {
        return Err(GlmError::DimensionMismatch(format!(
            "u has length {} but q = {}",
            u.len(),
            data.q()
        )));
    }
    let offset = data.z().mul_vec(u);
    let beta = fit_logistic_offset(data.y(), data.x(), &offset, &IrlsConfig::default())?;
    let ss = data.group_sums_of_squares(u);
    let sigma2 = DVector::from_iterator(
        data.k(),
        ss.iter()
            .zip(data.groups())
            .map(|(&s, &qk)| (s / qk as f64).max(VARIANCE_FLOOR)),
    );
    Ok(Theta::new(beta, sigma2, Scale::OriginalSigma2))
}

/// Source of imputed latent vectors, one per chain, for each iteration.
pub trait Imputer {
    /// Advances every chain at θ_{t−1} for iteration `t` (1-based) and
    /// returns the new latent vectors.
    fn impute(
        &mut self,
        theta: &Theta,
        data: &GlmmData,
        t: usize,
    ) -> Result<Vec<DVector<f64>>, SamplerError>;

    /// Acceptance rate of the most recent imputation.
    fn acceptance_rate(&self) -> f64;
}

/// m MALA/pMALA chains with keyed random streams and periodic step-size
/// adaptation.
#[derive(Debug, Clone)]
pub struct MalaImputer {
    chains: Vec<ChainState>,
    seed: u64,
    mcmc_steps: usize,
    precondition_after: usize,
    target_accept: f64,
    adapt_every: usize,
    last_rate: f64,
}

impl MalaImputer {
    /// Chains start from u₀ ~ N(0, diag(σ²₀)).
    pub fn new(config: &RunConfig, data: &GlmmData) -> Result<Self, EstimatorError> {
        let sigma2 = config.theta_init.sigma2();
        let chains = (0..config.chains)
            .map(|j| {
                let mut rng = rng::stream(config.seed, &[purpose::LATENT_INIT, j as u64]);
                let u = DVector::from_iterator(
                    data.q(),
                    data.column_group().iter().map(|&k| {
                        Normal::new(0.0, sigma2[k].sqrt())
                            .map(|d| d.sample(&mut rng))
                            .unwrap_or(0.0)
                    }),
                );
                ChainState::new(u, config.initial_step_size)
            })
            .collect();
        Ok(Self {
            chains,
            seed: config.seed,
            mcmc_steps: config.mcmc_steps,
            precondition_after: config.precondition_after,
            target_accept: config.target_accept,
            adapt_every: config.adapt_every,
            last_rate: f64::NAN,
        })
    }

    pub fn chains(&self) -> &[ChainState] {
        &self.chains
    }

    /// Preconditioner used at iteration t.
    pub fn preconditioner(
        &self,
        theta: &Theta,
        data: &GlmmData,
        t: usize,
    ) -> Result<Preconditioner, SamplerError> {
        let mode = if t <= self.precondition_after {
            PreconditionMode::Identity
        } else {
            PreconditionMode::InverseHessianAtZero
        };
        build_preconditioner(theta, data, mode)
    }
}

impl Imputer for MalaImputer {
    fn impute(
        &mut self,
        theta: &Theta,
        data: &GlmmData,
        t: usize,
    ) -> Result<Vec<DVector<f64>>, SamplerError> {
        let precond = self.preconditioner(theta, data, t)?;
        let potential = ConditionalPotential::new(theta, data)?;
        let mut accepted = 0;
        for (j, chain) in self.chains.iter_mut().enumerate() {
            let mut rng = rng::stream(self.seed, &[purpose::SWEEP, j as u64, t as u64]);
            accepted += pmala_sweep(chain, &precond, &potential, self.mcmc_steps, &mut rng)?;
        }
        self.last_rate = accepted as f64 / (self.chains.len() * self.mcmc_steps) as f64;
        if t % self.adapt_every == 0 {
            for chain in &mut self.chains {
                adapt_step_size(chain, self.target_accept);
            }
        }
        Ok(self.chains.iter().map(|c| c.u.clone()).collect())
    }

    fn acceptance_rate(&self) -> f64 {
        self.last_rate
    }
}

/// θ_{t−1/2}: chain average of the complete-data maximizers on `scale`.
/// On the log-σ scale the variance part is (1/2m)Σ_j log σ̃²_j.
pub fn averaged_maximizer(
    us: &[DVector<f64>],
    data: &GlmmData,
    scale: Scale,
) -> Result<Theta, GlmError> {
    let m = us.len() as f64;
    let mut beta = DVector::zeros(data.p());
    let mut var = DVector::zeros(data.k());
    for u in us {
        let maximizer = maximize_complete(u, data)?;
        beta += &maximizer.beta;
        match scale {
            Scale::OriginalSigma2 => var += &maximizer.var_components,
            Scale::LogSigma => var += maximizer.var_components.map(|s| 0.5 * s.ln()),
        }
    }
    Ok(Theta::new(beta / m, var / m, scale))
}

/// (1 − γ)·θ + γ·target, exact at γ ∈ {0, 1}.
pub(crate) fn shrink(theta: &Theta, target: &Theta, gamma: f64) -> Theta {
    let combine = |a: &DVector<f64>, b: &DVector<f64>| a * (1.0 - gamma) + b * gamma;
    Theta::new(
        combine(&theta.beta, &target.beta),
        combine(&theta.var_components, &target.var_components),
        theta.scale,
    )
}

/// Dispatches on `config.algorithm` with the default MALA imputer.
pub fn run(config: &RunConfig, data: &GlmmData) -> Result<RunTrace, EstimatorError> {
    match config.algorithm {
        Algorithm::Im => run_im(config, data).map(|r| r.trace),
        Algorithm::Imsa | Algorithm::ImsaLog => run_imsa(config, data),
        Algorithm::ScoreSa => run_scoresa(config, data),
    }
}
