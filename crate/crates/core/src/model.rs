//! Logistic-normal mixed model: data layout, parameters, and the analytic
//! quantities needed by the estimators and the sampler.
//!
//! The model is
//!
//! ```text
//! P(y_i = 1 | u) = expit(x_iᵀβ + z_iᵀu),   u ~ N(0, diag(σ²))
//! ```
//!
//! where the q latent variables are split into K consecutive groups, group k
//! having q_k members that share the variance σ²_k.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("response y[{index}] = {value} is not binary")]
    NonBinaryResponse { index: usize, value: f64 },
    #[error("invalid group layout: {0}")]
    InvalidGroups(String),
    #[error("variance component {index} = {value} is not positive")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error("non-finite parameter value")]
    NonFinite,
}

/// Sparse row storage for the random-effects design Z.
///
/// Each row holds `(column, value)` pairs sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self, ModelError> {
        for (i, row) in rows.iter_mut().enumerate() {
            row.retain(|&(_, v)| v != 0.0);
            row.sort_by_key(|&(j, _)| j);
            if let Some(&(j, _)) = row.iter().find(|&&(j, _)| j >= ncols) {
                return Err(ModelError::DimensionMismatch(format!(
                    "row {i} references column {j} but Z has {ncols} columns"
                )));
            }
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(ModelError::DimensionMismatch(format!(
                    "row {i} repeats a column index"
                )));
            }
            if row.iter().any(|&(_, v)| !v.is_finite()) {
                return Err(ModelError::NonFinite);
            }
        }
        Ok(Self { ncols, rows })
    }

    pub fn from_dense(z: &DMatrix<f64>) -> Self {
        let rows = (0..z.nrows())
            .map(|i| {
                (0..z.ncols())
                    .filter(|&j| z[(i, j)] != 0.0)
                    .map(|j| (j, z[(i, j)]))
                    .collect()
            })
            .collect();
        Self {
            ncols: z.ncols(),
            rows,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                z[(i, j)] = v;
            }
        }
        z
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Z·u
    pub fn mul_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(j, v)| v * u[j]).sum::<f64>()),
        )
    }

    /// Zᵀ·v
    pub fn tr_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for (row, &vi) in self.rows.iter().zip(v.iter()) {
            for &(j, z) in row {
                out[j] += z * vi;
            }
        }
        out
    }

    /// Zᵀ·diag(w)·Z as a dense q×q matrix.
    pub fn weighted_gram(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ncols, self.ncols);
        for (row, &wi) in self.rows.iter().zip(w.iter()) {
            for &(a, za) in row {
                for &(b, zb) in row {
                    out[(a, b)] += wi * za * zb;
                }
            }
        }
        out
    }
}

/// Observed data together with the fixed- and random-effects designs.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmmData {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: SparseRows,
    groups: Vec<usize>,
    /// Group index of every latent column.
    column_group: Vec<usize>,
}

impl GlmmData {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: SparseRows,
        groups: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "y has {n} rows, X has {}, Z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if let Some((index, &value)) = y
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(ModelError::NonBinaryResponse { index, value });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        if groups.is_empty() || groups.contains(&0) {
            return Err(ModelError::InvalidGroups(
                "every group must have at least one member".into(),
            ));
        }
        if groups.iter().sum::<usize>() != z.ncols() {
            return Err(ModelError::InvalidGroups(format!(
                "group sizes sum to {} but Z has {} columns",
                groups.iter().sum::<usize>(),
                z.ncols()
            )));
        }
        let column_group = groups
            .iter()
            .enumerate()
            .flat_map(|(k, &qk)| std::iter::repeat_n(k, qk))
            .collect();
        Ok(Self {
            y,
            x,
            z,
            groups,
            column_group,
        })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn z(&self) -> &SparseRows {
        &self.z
    }
    pub fn groups(&self) -> &[usize] {
        &self.groups
    }
    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn q(&self) -> usize {
        self.z.ncols()
    }
    pub fn k(&self) -> usize {
        self.groups.len()
    }
    pub fn column_group(&self) -> &[usize] {
        &self.column_group
    }

    /// Column range of group `k` inside u.
    pub fn group_range(&self, k: usize) -> std::ops::Range<usize> {
        let start: usize = self.groups[..k].iter().sum();
        start..start + self.groups[k]
    }

    /// Per-group sums of squares [u^(k)]ᵀu^(k).
    pub fn group_sums_of_squares(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut ss = vec![0.0; self.k()];
        for (j, &k) in self.column_group.iter().enumerate() {
            ss[k] += u[j] * u[j];
        }
        ss
    }

    /// Applies a row permutation to y, X and Z together.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self, ModelError> {
        if perm.len() != self.n() {
            return Err(ModelError::DimensionMismatch("permutation length".into()));
        }
        let y = DVector::from_iterator(self.n(), perm.iter().map(|&i| self.y[i]));
        let x = DMatrix::from_fn(self.n(), self.p(), |r, c| self.x[(perm[r], c)]);
        let z = SparseRows::new(
            self.q(),
            perm.iter().map(|&i| self.z.row(i).to_vec()).collect(),
        )?;
        Self::new(y, x, z, self.groups.clone())
    }

    pub(crate) fn check_latent(&self, u: &DVector<f64>) -> Result<(), ModelError> {
        if u.len() != self.q() {
            return Err(ModelError::DimensionMismatch(format!(
                "u has length {} but q = {}",
                u.len(),
                self.q()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_theta(&self, theta: &Theta) -> Result<(), ModelError> {
        if theta.beta.len() != self.p() || theta.var_components.len() != self.k() {
            return Err(ModelError::DimensionMismatch(format!(
                "theta has p={}, K={} but data has p={}, K={}",
                theta.beta.len(),
                theta.var_components.len(),
                self.p(),
                self.k()
            )));
        }
        theta.validate()
    }
}

/// Scale on which the variance components of [`Theta`] are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    /// σ²_k
    OriginalSigma2,
    /// τ_k = log σ_k
    LogSigma,
}

/// Fixed effects plus variance components on an explicit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub beta: DVector<f64>,
    pub var_components: DVector<f64>,
    pub scale: Scale,
}

impl Theta {
    pub fn new(beta: DVector<f64>, var_components: DVector<f64>, scale: Scale) -> Self {
        Self {
            beta,
            var_components,
            scale,
        }
    }

    pub fn from_sigma2(beta: &[f64], sigma2: &[f64]) -> Self {
        Self::new(
            DVector::from_column_slice(beta),
            DVector::from_column_slice(sigma2),
            Scale::OriginalSigma2,
        )
    }

    pub fn from_log_sigma(beta: &[f64], tau: &[f64]) -> Self {
        Self::new(
            DVector::from_column_slice(beta),
            DVector::from_column_slice(tau),
            Scale::LogSigma,
        )
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn k(&self) -> usize {
        self.var_components.len()
    }

    pub fn dim(&self) -> usize {
        self.p() + self.k()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self
            .beta
            .iter()
            .chain(self.var_components.iter())
            .any(|v| !v.is_finite())
        {
            return Err(ModelError::NonFinite);
        }
        if self.scale == Scale::OriginalSigma2 {
            if let Some((index, &value)) = self
                .var_components
                .iter()
                .enumerate()
                .find(|(_, &v)| v <= 0.0)
            {
                return Err(ModelError::NonPositiveVariance { index, value });
            }
        }
        Ok(())
    }

    /// Variance components as σ², whatever the stored scale.
    pub fn sigma2(&self) -> DVector<f64> {
        match self.scale {
            Scale::OriginalSigma2 => self.var_components.clone(),
            Scale::LogSigma => self.var_components.map(|t| (2.0 * t).exp()),
        }
    }

    /// Variance components as τ = log σ, whatever the stored scale.
    pub fn log_sigma(&self) -> DVector<f64> {
        match self.scale {
            Scale::OriginalSigma2 => self.var_components.map(|s| 0.5 * s.ln()),
            Scale::LogSigma => self.var_components.clone(),
        }
    }

    pub fn to_scale(&self, scale: Scale) -> Theta {
        let var_components = match scale {
            Scale::OriginalSigma2 => self.sigma2(),
            Scale::LogSigma => self.log_sigma(),
        };
        Theta::new(self.beta.clone(), var_components, scale)
    }

    /// Concatenation (β, variance components) on the stored scale.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.beta.iter().chain(self.var_components.iter()).copied(),
        )
    }

    pub fn from_vector(v: &DVector<f64>, p: usize, scale: Scale) -> Theta {
        Theta::new(
            v.rows(0, p).into_owned(),
            v.rows(p, v.len() - p).into_owned(),
            scale,
        )
    }

    /// Column names used in trace and summary files.
    pub fn component_names(&self) -> Vec<String> {
        let var_prefix = match self.scale {
            Scale::OriginalSigma2 => "sigma2",
            Scale::LogSigma => "log_sigma",
        };
        (1..=self.p())
            .map(|j| format!("beta_{j}"))
            .chain((1..=self.k()).map(|k| format!("{var_prefix}_{k}")))
            .collect()
    }
}

/// Logistic function, evaluated without overflow.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^η) with a branch at η = 30.
pub fn log1p_exp(eta: f64) -> f64 {
    if eta > 30.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// (log(1 + e^η), expit(η)) from one exponential, with the same branch as
/// [`log1p_exp`].
#[inline]
pub(crate) fn log1p_exp_expit(eta: f64) -> (f64, f64) {
    if eta > 30.0 {
        let e = (-eta).exp();
        (eta + e.ln_1p(), 1.0 / (1.0 + e))
    } else {
        let e = eta.exp();
        (e.ln_1p(), e / (1.0 + e))
    }
}

/// η = Xβ + Zu
pub fn linear_predictor(
    theta: &Theta,
    u: &DVector<f64>,
    data: &GlmmData,
) -> Result<DVector<f64>, ModelError> {
    if theta.p() != data.p() {
        return Err(ModelError::DimensionMismatch(format!(
            "beta has length {} but X has {} columns",
            theta.p(),
            data.p()
        )));
    }
    data.check_latent(u)?;
    Ok(data.x() * &theta.beta + data.z().mul_vec(u))
}

fn bernoulli_loglik(y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &ei)| yi * ei - log1p_exp(ei))
        .sum()
}

/// Complete-data log-likelihood log f(y, u; θ).
///
/// The value does not depend on the scale θ is stored on.
pub fn complete_loglik(
    theta: &Theta,
    u: &DVector<f64>,
    data: &GlmmData,
) -> Result<f64, ModelError> {
    data.check_theta(theta)?;
    let eta = linear_predictor(theta, u, data)?;
    let sigma2 = theta.sigma2();
    let ss = data.group_sums_of_squares(u);
    let prior: f64 = (0..data.k())
        .map(|k| -0.5 * ss[k] / sigma2[k] - 0.5 * data.groups()[k] as f64 * sigma2[k].ln())
        .sum();
    Ok(bernoulli_loglik(data.y(), &eta) + prior)
}

/// Gradient of the complete-data log-likelihood with respect to θ on the
/// scale θ is stored on, ordered (β, variance components).
///
/// On the log-σ scale the variance part is exp(−2τ_k)·[u^(k)]ᵀu^(k) − q_k;
/// on the original scale it is ½σ⁻⁴[u^(k)]ᵀu^(k) − ½q_kσ⁻².
pub fn score_gradient(
    theta: &Theta,
    u: &DVector<f64>,
    data: &GlmmData,
) -> Result<DVector<f64>, ModelError> {
    data.check_theta(theta)?;
    let eta = linear_predictor(theta, u, data)?;
    let resid = DVector::from_iterator(
        data.n(),
        data.y().iter().zip(eta.iter()).map(|(&y, &e)| y - expit(e)),
    );
    let grad_beta = data.x().tr_mul(&resid);
    let ss = data.group_sums_of_squares(u);
    let mut grad = DVector::zeros(theta.dim());
    grad.rows_mut(0, data.p()).copy_from(&grad_beta);
    for k in 0..data.k() {
        let qk = data.groups()[k] as f64;
        let v = theta.var_components[k];
        grad[data.p() + k] = match theta.scale {
            Scale::LogSigma => (-2.0 * v).exp() * ss[k] - qk,
            Scale::OriginalSigma2 => 0.5 * ss[k] / (v * v) - 0.5 * qk / v,
        };
    }
    Ok(grad)
}

/// Negative Hessian H = −∂²/∂θ∂θᵀ log f(y, u; θ) on the scale θ is stored on.
///
/// β block: XᵀWX with W = diag(expit(η)(1 − expit(η))). The β–variance
/// cross block vanishes. Variance block is diagonal:
/// 2·exp(−2τ_k)·S_k on the log-σ scale, σ_k⁻⁶S_k − ½q_kσ_k⁻⁴ on the
/// original scale (S_k = [u^(k)]ᵀu^(k)).
pub fn complete_hessian(
    theta: &Theta,
    u: &DVector<f64>,
    data: &GlmmData,
) -> Result<DMatrix<f64>, ModelError> {
    data.check_theta(theta)?;
    let eta = linear_predictor(theta, u, data)?;
    let p = data.p();
    let mut h = DMatrix::zeros(theta.dim(), theta.dim());
    let x = data.x();
    for (i, &e) in eta.iter().enumerate() {
        let mu = expit(e);
        let w = mu * (1.0 - mu);
        for a in 0..p {
            let xa = w * x[(i, a)];
            for b in 0..p {
                h[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    let ss = data.group_sums_of_squares(u);
    for k in 0..data.k() {
        let qk = data.groups()[k] as f64;
        let v = theta.var_components[k];
        h[(p + k, p + k)] = match theta.scale {
            Scale::LogSigma => 2.0 * (-2.0 * v).exp() * ss[k],
            Scale::OriginalSigma2 => ss[k] / (v * v * v) - 0.5 * qk / (v * v),
        };
    }
    Ok(h)
}

/// Potential energy Q(u) = −log f(u | y; θ) + const of the latent variables
/// at fixed θ, with its gradient and Hessian.
#[derive(Debug, Clone)]
pub struct ConditionalPotential<'a> {
    data: &'a GlmmData,
    /// Xβ
    fixed_part: DVector<f64>,
    /// 1/σ² expanded to one entry per latent column.
    precision_diag: DVector<f64>,
}

impl<'a> ConditionalPotential<'a> {
    pub fn new(theta: &Theta, data: &'a GlmmData) -> Result<Self, ModelError> {
        data.check_theta(theta)?;
        let sigma2 = theta.sigma2();
        if let Some((index, &value)) = sigma2.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(ModelError::NonPositiveVariance { index, value });
        }
        let precision_diag = DVector::from_iterator(
            data.q(),
            data.column_group().iter().map(|&k| 1.0 / sigma2[k]),
        );
        Ok(Self {
            data,
            fixed_part: data.x() * &theta.beta,
            precision_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.q()
    }

    pub fn precision_diag(&self) -> &DVector<f64> {
        &self.precision_diag
    }

    fn eta(&self, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let random_part = self.data.z().mul_vec(u);
        let eta = &self.fixed_part + &random_part;
        (eta, random_part)
    }

    fn gaussian_term(&self, u: &DVector<f64>) -> f64 {
        0.5 * u
            .iter()
            .zip(self.precision_diag.iter())
            .map(|(&ui, &pi)| pi * ui * ui)
            .sum::<f64>()
    }

    pub fn energy(&self, u: &DVector<f64>) -> f64 {
        let (eta, random_part) = self.eta(u);
        let lik: f64 = self
            .data
            .y()
            .iter()
            .zip(eta.iter().zip(random_part.iter()))
            .map(|(&y, (&e, &r))| y * r - log1p_exp(e))
            .sum();
        self.gaussian_term(u) - lik
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        self.energy_and_gradient(u).1
    }

    /// Q(u) and ∇Q(u) = diag(σ²)⁻¹u − Zᵀ(y − expit(η)) sharing one pass over η.
    pub fn energy_and_gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let (eta, random_part) = self.eta(u);
        let y = self.data.y();
        let mut lik = 0.0;
        let mut resid = DVector::zeros(eta.len());
        for i in 0..eta.len() {
            let (l, mu) = log1p_exp_expit(eta[i]);
            lik += y[i] * random_part[i] - l;
            resid[i] = y[i] - mu;
        }
        let grad = self.precision_diag.component_mul(u) - self.data.z().tr_mul_vec(&resid);
        (self.gaussian_term(u) - lik, grad)
    }

    /// ∇²Q(u) = diag(σ²)⁻¹ + Zᵀ diag(expit(η)(1 − expit(η))) Z
    pub fn hessian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let (eta, _) = self.eta(u);
        let w = eta.map(|e| {
            let mu = expit(e);
            mu * (1.0 - mu)
        });
        let mut h = self.data.z().weighted_gram(&w);
        for j in 0..self.dim() {
            h[(j, j)] += self.precision_diag[j];
        }
        h
    }
}

pub fn potential_energy(u: &DVector<f64>, theta: &Theta, data: &GlmmData) -> Result<f64, ModelError> {
    data.check_latent(u)?;
    Ok(ConditionalPotential::new(theta, data)?.energy(u))
}

pub fn potential_gradient(
    u: &DVector<f64>,
    theta: &Theta,
    data: &GlmmData,
) -> Result<DVector<f64>, ModelError> {
    data.check_latent(u)?;
    Ok(ConditionalPotential::new(theta, data)?.gradient(u))
}

pub fn potential_hessian(
    u: &DVector<f64>,
    theta: &Theta,
    data: &GlmmData,
) -> Result<DMatrix<f64>, ModelError> {
    data.check_latent(u)?;
    Ok(ConditionalPotential::new(theta, data)?.hessian(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn single_obs(y: f64) -> GlmmData {
        GlmmData::new(
            DVector::from_element(1, y),
            DMatrix::from_element(1, 1, 1.0),
            SparseRows::new(1, vec![vec![(0, 1.0)]]).unwrap(),
            vec![1],
        )
        .unwrap()
    }

    #[test]
    fn zero_predictor_at_zero() {
        let data = single_obs(0.0);
        let theta = Theta::from_sigma2(&[0.0], &[1.0]);
        let u = DVector::zeros(1);
        let eta = linear_predictor(&theta, &u, &data).unwrap();
        assert_eq!(eta[0], 0.0);
        let ll = complete_loglik(&theta, &u, &data).unwrap();
        assert!(close(ll, -std::f64::consts::LN_2, 1e-15));
    }

    #[test]
    fn unit_e_variance_shifts_by_half() {
        let data = single_obs(0.0);
        let theta = Theta::from_sigma2(&[0.0], &[std::f64::consts::E]);
        let ll = complete_loglik(&theta, &DVector::zeros(1), &data).unwrap();
        assert!(close(ll, -std::f64::consts::LN_2 - 0.5, 1e-15));
    }

    #[test]
    fn tau_gradient_special_values() {
        let data = GlmmData::new(
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
            DMatrix::from_element(3, 1, 1.0),
            SparseRows::new(2, vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap(),
            vec![2],
        )
        .unwrap();
        let theta = Theta::from_log_sigma(&[0.3], &[0.2]);
        let g = score_gradient(&theta, &DVector::zeros(2), &data).unwrap();
        assert_eq!(g[1], -2.0);

        // exp(-2τ)·uᵀu = q makes the τ-derivative vanish
        let tau: f64 = 0.2;
        let s = (2.0 * (2.0 * tau).exp()).sqrt() / 2f64.sqrt();
        let u = DVector::from_vec(vec![s, s]);
        let g = score_gradient(&theta, &u, &data).unwrap();
        assert!(g[1].abs() < 1e-12);
    }

    #[test]
    fn log1p_exp_is_stable() {
        assert_eq!(log1p_exp(1000.0), 1000.0);
        assert!(log1p_exp(-1000.0) >= 0.0);
        assert!(close(log1p_exp(0.0), std::f64::consts::LN_2, 1e-15));
        assert!(close(log1p_exp(30.5), 30.5 + (-30.5f64).exp(), 1e-15));
        assert_eq!(expit(800.0), 1.0);
        assert_eq!(expit(-800.0), 0.0);
    }

    #[test]
    fn nonpositive_variance_rejected() {
        let data = single_obs(1.0);
        let theta = Theta::from_sigma2(&[0.0], &[0.0]);
        assert!(matches!(
            complete_loglik(&theta, &DVector::zeros(1), &data),
            Err(ModelError::NonPositiveVariance { .. })
        ));
        assert!(potential_energy(&DVector::zeros(1), &theta, &data).is_err());
    }

    #[test]
    fn data_invariants_enforced() {
        let bad_y = GlmmData::new(
            DVector::from_element(1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            SparseRows::new(1, vec![vec![(0, 1.0)]]).unwrap(),
            vec![1],
        );
        assert!(matches!(bad_y, Err(ModelError::NonBinaryResponse { .. })));
        let bad_groups = GlmmData::new(
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            SparseRows::new(2, vec![vec![(0, 1.0)]]).unwrap(),
            vec![1],
        );
        assert!(matches!(bad_groups, Err(ModelError::InvalidGroups(_))));
        assert!(SparseRows::new(1, vec![vec![(3, 1.0)]]).is_err());
    }

    #[test]
    fn beta_block_at_zero_predictor_is_quarter_gram() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]);
        let data = GlmmData::new(
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
            x.clone(),
            SparseRows::new(1, vec![vec![(0, 1.0)]; 3]).unwrap(),
            vec![1],
        )
        .unwrap();
        let theta = Theta::from_sigma2(&[0.0, 0.0], &[1.3]);
        let h = complete_hessian(&theta, &DVector::zeros(1), &data).unwrap();
        let expected = x.transpose() * &x * 0.25;
        for a in 0..2 {
            for b in 0..2 {
                assert!(close(h[(a, b)], expected[(a, b)], 1e-15));
            }
            assert_eq!(h[(a, 2)], 0.0);
            assert_eq!(h[(2, a)], 0.0);
        }
    }

    #[test]
    fn pure_gaussian_potential_when_z_is_zero() {
        let data = GlmmData::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_element(2, 1, 1.0),
            SparseRows::new(3, vec![vec![], vec![]]).unwrap(),
            vec![2, 1],
        )
        .unwrap();
        let theta = Theta::from_sigma2(&[0.4], &[2.0, 0.5]);
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let u0 = DVector::zeros(3);
        let q = potential_energy(&u, &theta, &data).unwrap();
        let q0 = potential_energy(&u0, &theta, &data).unwrap();
        assert!(close(q - q0, 0.5 * (1.0 / 2.0 + 4.0 / 2.0 + 0.25 / 0.5), 1e-14));
        let h = potential_hessian(&u, &theta, &data).unwrap();
        assert_eq!(h, DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5, 2.0])));
    }

    #[test]
    fn potential_gradient_at_origin_with_all_ones() {
        let z = SparseRows::new(
            2,
            vec![vec![(0, 1.0)], vec![(0, 0.5), (1, 2.0)], vec![(1, -1.0)]],
        )
        .unwrap();
        let data = GlmmData::new(
            DVector::from_element(3, 1.0),
            DMatrix::from_element(3, 1, 1.0),
            z.clone(),
            vec![2],
        )
        .unwrap();
        let theta = Theta::from_sigma2(&[0.0], &[1.0]);
        let g = potential_gradient(&DVector::zeros(2), &theta, &data).unwrap();
        let expected = -0.5 * z.tr_mul_vec(&DVector::from_element(3, 1.0));
        assert_eq!(g, expected);
    }
}
