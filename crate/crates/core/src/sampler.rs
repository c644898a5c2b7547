//! Metropolis-adjusted Langevin transitions for the latent variables.
//!
//! A sweep runs N Metropolis-Hastings steps with the (optionally
//! preconditioned) Langevin proposal
//!
//! ```text
//! ξ  = u − (ε²/2) Σ ∇Q(u)
//! u* = ξ + ε Z,   Z ~ N(0, Σ)
//! ```
//!
//! and leaves exp(−Q) invariant. The drift point ξ of the current state is
//! carried between steps so every step costs one evaluation of Q and ∇Q.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{ConditionalPotential, GlmmData, ModelError, Theta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("non-finite potential or gradient at the current state")]
    NonFinite,
    #[error("preconditioner factorization failed")]
    Factorization,
    #[error("dimension mismatch: chain has {chain}, target has {target}")]
    DimensionMismatch { chain: usize, target: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Negative log target density up to a constant.
pub trait Potential {
    fn dim(&self) -> usize;
    fn energy_and_gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>);
}

impl Potential for ConditionalPotential<'_> {
    fn dim(&self) -> usize {
        ConditionalPotential::dim(self)
    }

    fn energy_and_gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        ConditionalPotential::energy_and_gradient(self, u)
    }
}

/// One Markov chain over the latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub u: DVector<f64>,
    /// Proposal step size ε.
    pub eps: f64,
    /// Accepted proposals since the last adaptation.
    pub accepted: u64,
    /// Proposals since the last adaptation.
    pub proposed: u64,
}

impl ChainState {
    pub fn new(u: DVector<f64>, eps: f64) -> Self {
        assert!(eps > 0.0, "step size must be positive");
        Self {
            u,
            eps,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionMode {
    Identity,
    InverseHessianAtZero,
}

#[derive(Debug, Clone)]
struct Dense {
    sigma: DMatrix<f64>,
    /// Lower Cholesky factor of Σ.
    sigma_chol: DMatrix<f64>,
    /// Σ⁻¹
    precision: DMatrix<f64>,
}

/// Proposal covariance Σ, immutable once built.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    dim: usize,
    dense: Option<Dense>,
}

impl Preconditioner {
    pub fn identity(dim: usize) -> Self {
        Self { dim, dense: None }
    }

    /// Σ = precision⁻¹ for a symmetric positive-definite precision matrix.
    pub fn from_precision(precision: DMatrix<f64>) -> Result<Self, SamplerError> {
        let dim = precision.nrows();
        let sigma = precision
            .clone()
            .cholesky()
            .ok_or(SamplerError::Factorization)?
            .inverse();
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let sigma_chol = sigma
            .clone()
            .cholesky()
            .ok_or(SamplerError::Factorization)?
            .unpack();
        Ok(Self {
            dim,
            dense: Some(Dense {
                sigma,
                sigma_chol,
                precision,
            }),
        })
    }

    pub fn mode(&self) -> PreconditionMode {
        match self.dense {
            None => PreconditionMode::Identity,
            Some(_) => PreconditionMode::InverseHessianAtZero,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        match &self.dense {
            None => DMatrix::identity(self.dim, self.dim),
            Some(d) => d.sigma.clone(),
        }
    }

    /// Σv
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.dense {
            None => v.clone(),
            Some(d) => &d.sigma * v,
        }
    }

    /// vᵀΣ⁻¹v
    pub fn inv_quad(&self, v: &DVector<f64>) -> f64 {
        match &self.dense {
            None => v.norm_squared(),
            Some(d) => v.dot(&(&d.precision * v)),
        }
    }

    /// Z ~ N(0, Σ)
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let w = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        match &self.dense {
            None => w,
            Some(d) => &d.sigma_chol * w,
        }
    }
}

/// Σ = I, or Σ = [∇²Q(0)]⁻¹ at the given θ.
pub fn build_preconditioner(
    theta: &Theta,
    data: &GlmmData,
    mode: PreconditionMode,
) -> Result<Preconditioner, SamplerError> {
    match mode {
        PreconditionMode::Identity => Ok(Preconditioner::identity(data.q())),
        PreconditionMode::InverseHessianAtZero => {
            let potential = ConditionalPotential::new(theta, data)?;
            Preconditioner::from_precision(potential.hessian(&DVector::zeros(data.q())))
        }
    }
}

/// log ρ for a move from `u_old` (drift point `xi`) to `u_star` (drift point
/// `xi_star`).
#[allow(clippy::too_many_arguments)]
pub fn log_acceptance_ratio(
    q_old: f64,
    q_star: f64,
    u_old: &DVector<f64>,
    xi: &DVector<f64>,
    u_star: &DVector<f64>,
    xi_star: &DVector<f64>,
    eps: f64,
    precond: &Preconditioner,
) -> f64 {
    let scale = 1.0 / (2.0 * eps * eps);
    q_old - q_star + scale * precond.inv_quad(&(u_star - xi))
        - scale * precond.inv_quad(&(u_old - xi_star))
}

fn drift(u: &DVector<f64>, grad: &DVector<f64>, eps: f64, precond: &Preconditioner) -> DVector<f64> {
    u - precond.apply(grad) * (eps * eps / 2.0)
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs `steps` MALA/pMALA transitions. Returns the number accepted.
///
/// Proposals landing where Q or ∇Q is non-finite are rejected; a non-finite
/// current state is an error.
pub fn pmala_sweep<P, R>(
    chain: &mut ChainState,
    precond: &Preconditioner,
    potential: &P,
    steps: usize,
    rng: &mut R,
) -> Result<usize, SamplerError>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    if chain.u.len() != potential.dim() || precond.dim() != potential.dim() {
        return Err(SamplerError::DimensionMismatch {
            chain: chain.u.len(),
            target: potential.dim(),
        });
    }
    let eps = chain.eps;
    let mut u_old = chain.u.clone();
    let (mut q_old, grad) = potential.energy_and_gradient(&u_old);
    if !q_old.is_finite() || !all_finite(&grad) {
        return Err(SamplerError::NonFinite);
    }
    let mut xi = drift(&u_old, &grad, eps, precond);

    let mut accepted = 0;
    for _ in 0..steps {
        let z = precond.sample(rng);
        let w: f64 = rng.random();
        let u_star = &xi + z * eps;
        let (q_star, grad_star) = potential.energy_and_gradient(&u_star);
        chain.proposed += 1;
        if !q_star.is_finite() || !all_finite(&grad_star) {
            continue;
        }
        let xi_star = drift(&u_star, &grad_star, eps, precond);
        let log_rho =
            log_acceptance_ratio(q_old, q_star, &u_old, &xi, &u_star, &xi_star, eps, precond);
        if w < log_rho.exp().min(1.0) {
            u_old = u_star;
            xi = xi_star;
            q_old = q_star;
            accepted += 1;
        }
    }
    chain.accepted += accepted as u64;
    chain.u = u_old;
    Ok(accepted)
}

pub const ADAPTATION_RATE: f64 = 0.5;
pub const MIN_STEP_SIZE: f64 = 1e-6;
pub const MAX_STEP_SIZE: f64 = 1e2;

/// ε ← ε·exp(c·(observed − target)), clamped, counters reset. A chain with
/// no proposals is left unchanged.
pub fn adapt_step_size(chain: &mut ChainState, target_rate: f64) {
    let Some(rate) = chain.acceptance_rate() else {
        return;
    };
    chain.eps = (chain.eps * (ADAPTATION_RATE * (rate - target_rate)).exp())
        .clamp(MIN_STEP_SIZE, MAX_STEP_SIZE);
    chain.accepted = 0;
    chain.proposed = 0;
}
