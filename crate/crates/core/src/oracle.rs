//! Brute-force reference computations: central finite differences and the
//! Gauss–Hermite marginal likelihood for models with one latent variable per
//! cluster. Nothing here is used by the estimators themselves.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::glm::{fit_logistic_offset, IrlsConfig};
use crate::model::{log1p_exp, GlmmData, Scale, Theta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("non-finite function value during finite differencing")]
    NonFinite,
    #[error("data do not have one latent variable per cluster: {0}")]
    Structure(String),
    #[error("marginal MLE did not converge (gradient sup-norm {gradient_norm:.3e})")]
    NonConvergence { gradient_norm: f64 },
}

/// Central-difference gradient.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>, OracleError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(OracleError::NonFinite);
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Jacobian of a vector field; row i holds ∂f_i/∂x.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>, OracleError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut jac: Option<DMatrix<f64>> = None;
    let mut xp = x.clone();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(fp.len(), x.len()));
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Central-difference Hessian.
pub fn fd_hessian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>, OracleError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x.len();
    let eval = |shifts: &[(usize, f64)]| {
        let mut xs = x.clone();
        for &(i, s) in shifts {
            xs[i] += s;
        }
        let v = f(&xs);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OracleError::NonFinite)
        }
    };
    let f0 = eval(&[])?;
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] = (eval(&[(i, h)])? - 2.0 * f0 + eval(&[(i, -h)])?) / (h * h);
        for j in 0..i {
            let v = (eval(&[(i, h), (j, h)])? - eval(&[(i, h), (j, -h)])?
                - eval(&[(i, -h), (j, h)])?
                + eval(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Gauss–Hermite rule for ∫ g(x) e^{−x²} dx.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub const DEFAULT_ORDER: usize = 50;

    /// Nodes from the eigenvalues of the Jacobi matrix, polished by Newton
    /// iteration on the orthonormal Hermite recurrence, which also gives the
    /// weights.
    pub fn gauss_hermite(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| b.total_cmp(a));

        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        for i in 0..n.div_ceil(2) {
            let mut z = if 2 * i + 1 == n { 0.0 } else { guesses[i] };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / pp / pp;
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite(Self::DEFAULT_ORDER)
    }
}

/// Rows of each latent column; errors unless every row has exactly one
/// non-zero Z entry.
fn cluster_rows(data: &GlmmData) -> Result<Vec<Vec<(usize, f64)>>, OracleError> {
    let mut clusters = vec![Vec::new(); data.q()];
    for i in 0..data.n() {
        match data.z().row(i) {
            [(j, v)] => clusters[*j].push((i, *v)),
            row => {
                return Err(OracleError::Structure(format!(
                    "row {i} has {} random-effect entries",
                    row.len()
                )))
            }
        }
    }
    Ok(clusters)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// log f(y; θ) = Σ_clusters log ∫ Π_i Bernoulli(y_i | expit(x_iᵀβ + z_i u)) φ(u; 0, σ²) du
/// with u = √(2σ²)·node.
pub fn marginal_loglik_quadrature(
    theta: &Theta,
    data: &GlmmData,
    rule: &QuadratureRule,
) -> Result<f64, OracleError> {
    data.check_theta(theta)
        .map_err(|e| OracleError::Structure(e.to_string()))?;
    let clusters = cluster_rows(data)?;
    let sigma2 = theta.sigma2();
    let fixed = data.x() * &theta.beta;
    let y = data.y();
    let log_norm = -0.5 * std::f64::consts::PI.ln();
    let mut total = 0.0;
    for (j, rows) in clusters.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let scale = (2.0 * sigma2[data.column_group()[j]]).sqrt();
        let terms = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| {
            let u = scale * x;
            let ll: f64 = rows
                .iter()
                .map(|&(i, z)| {
                    let eta = fixed[i] + z * u;
                    y[i] * eta - log1p_exp(eta)
                })
                .sum();
            w.ln() + ll
        });
        total += log_norm + log_sum_exp(terms);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    /// Maximizer with variance components on the log σ scale.
    pub theta: Theta,
    pub loglik: f64,
    /// Sup-norm of the finite-difference gradient at `theta`.
    pub gradient_norm: f64,
    pub iterations: usize,
}

pub const MLE_GRADIENT_TOLERANCE: f64 = 1e-6;

/// Marginal MLE by damped Newton on (β, log σ) with finite-difference
/// derivatives of the quadrature log-likelihood. Starts from `start` or, by
/// default, from the offset-free logistic fit with σ² = 1.
pub fn quadrature_mle(
    data: &GlmmData,
    rule: &QuadratureRule,
    start: Option<&Theta>,
) -> Result<MleResult, OracleError> {
    let p = data.p();
    let objective = |v: &DVector<f64>| {
        marginal_loglik_quadrature(&Theta::from_vector(v, p, Scale::LogSigma), data, rule)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut x = match start {
        Some(th) => th.to_scale(Scale::LogSigma).to_vector(),
        None => {
            let beta = fit_logistic_offset(
                data.y(),
                data.x(),
                &DVector::zeros(data.n()),
                &IrlsConfig::default(),
            )
            .unwrap_or_else(|_| DVector::zeros(p));
            Theta::new(beta, DVector::zeros(data.k()), Scale::LogSigma).to_vector()
        }
    };
    // Validates structure up front.
    let mut f = marginal_loglik_quadrature(&Theta::from_vector(&x, p, Scale::LogSigma), data, rule)?;

    let max_iterations = 200;
    for iteration in 0..max_iterations {
        let g = fd_gradient(objective, &x, 1e-5)?;
        // Stop well inside the tolerance so FD noise cannot push it over.
        if g.amax() < 0.1 * MLE_GRADIENT_TOLERANCE {
            return Ok(MleResult {
                theta: Theta::from_vector(&x, p, Scale::LogSigma),
                loglik: f,
                gradient_norm: g.amax(),
                iterations: iteration,
            });
        }
        let h = fd_hessian(objective, &x, 1e-4)?;
        let neg_h = -h;
        let direction = match neg_h.cholesky() {
            Some(chol) => chol.solve(&g),
            None => g.clone(),
        };
        let slope = g.dot(&direction);
        let mut step = 1.0;
        loop {
            let candidate = &x + &direction * step;
            let fc = objective(&candidate);
            if fc >= f + 1e-4 * step * slope || step < 1e-12 {
                if fc >= f {
                    x = candidate;
                    f = fc;
                }
                break;
            }
            step *= 0.5;
        }
        if step < 1e-12 {
            break;
        }
    }
    let g = fd_gradient(objective, &x, 1e-5)?;
    if g.amax() < MLE_GRADIENT_TOLERANCE {
        Ok(MleResult {
            theta: Theta::from_vector(&x, p, Scale::LogSigma),
            loglik: f,
            gradient_norm: g.amax(),
            iterations: max_iterations,
        })
    } else {
        Err(OracleError::NonConvergence {
            gradient_norm: g.amax(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SparseRows;

    #[test]
    fn fd_of_quadratic_and_constant() {
        let x = DVector::from_vec(vec![0.3, -1.2, 2.5]);
        let g = fd_gradient(|v| v.dot(v), &x, 1e-5).unwrap();
        assert!((g - &x * 2.0).amax() < 1e-8);
        let g0 = fd_gradient(|_| 4.2, &x, 1e-5).unwrap();
        assert_eq!(g0, DVector::zeros(3));
        let h = fd_hessian(|v| v.dot(v), &x, 1e-4).unwrap();
        assert!((h - DMatrix::identity(3, 3) * 2.0).amax() < 1e-6);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let j = fd_jacobian(|v| &a * v, &x, 1e-5).unwrap();
        assert!((j - &a).amax() < 1e-9);
        assert_eq!(
            fd_gradient(|v| if v[0] > 0.3 { f64::NAN } else { 0.0 }, &x, 1e-5),
            Err(OracleError::NonFinite)
        );
    }

    #[test]
    fn gauss_hermite_rule_properties() {
        for order in [1, 2, 5, 20, 50, 100, 200, 300] {
            let rule = QuadratureRule::gauss_hermite(order);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!(rule.nodes.windows(2).all(|w| w[0] > w[1]), "order {order}");
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - std::f64::consts::PI.sqrt()).abs() < 1e-12, "order {order}");
            if order >= 3 {
                // ∫x² e^{−x²} = √π/2, ∫x⁴ e^{−x²} = 3√π/4
                let m2: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x * x).sum();
                let m4: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m2 - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
                assert!((m4 - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-11);
            }
        }
    }

    fn single(y: f64) -> GlmmData {
        GlmmData::new(
            DVector::from_element(1, y),
            DMatrix::from_element(1, 1, 1.0),
            SparseRows::new(1, vec![vec![(0, 1.0)]]).unwrap(),
            vec![1],
        )
        .unwrap()
    }

    #[test]
    fn symmetric_single_observation_is_one_half() {
        let rule = QuadratureRule::default();
        for s2 in [0.1, 1.0, 7.0] {
            let ll = marginal_loglik_quadrature(&Theta::from_sigma2(&[0.0], &[s2]), &single(0.0), &rule)
                .unwrap();
            assert!((ll - 0.5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_variance_is_complete_likelihood_at_zero() {
        let rule = QuadratureRule::default();
        let theta = Theta::from_sigma2(&[0.8], &[1e-8]);
        let ll = marginal_loglik_quadrature(&theta, &single(1.0), &rule).unwrap();
        let at_zero = 0.8 - log1p_exp(0.8);
        assert!((ll - at_zero).abs() < 1e-7);
    }

    #[test]
    fn crossed_design_rejected() {
        let data = GlmmData::new(
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            SparseRows::new(2, vec![vec![(0, 1.0), (1, 1.0)]]).unwrap(),
            vec![1, 1],
        )
        .unwrap();
        let theta = Theta::from_sigma2(&[0.0], &[1.0, 1.0]);
        assert!(matches!(
            marginal_loglik_quadrature(&theta, &data, &QuadratureRule::default()),
            Err(OracleError::Structure(_))
        ));
    }
}
