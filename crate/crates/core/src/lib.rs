//! Monte Carlo maximum likelihood for logistic-normal mixed models:
//! imputation/maximization stochastic approximation, score-equation SA,
//! a preconditioned MALA sampler for the random effects, and the
//! simulation and replication harness around them.

pub mod estimators;
pub mod glm;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod harness;
pub mod io;
