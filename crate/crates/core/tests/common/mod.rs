#![allow(dead_code)]

use imsa::model::{
    complete_hessian, complete_loglik, potential_energy, potential_gradient, potential_hessian,
    score_gradient, ConditionalPotential, GlmmData, Scale, SparseRows, Theta,
};
use imsa::sampler::{build_preconditioner, pmala_sweep, ChainState, PreconditionMode, Preconditioner};
use imsa::oracle::{fd_gradient, fd_hessian, fd_jacobian};
use imsa::simulate::{default_salamander_design, gen_booth_hobert, gen_salamander};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| sd * normal(rng))
}

/// Random data with a general Z: every row has one to three non-zero
/// entries in random columns.
pub fn random_data(rng: &mut ChaCha8Rng, n: usize, p: usize, groups: &[usize]) -> GlmmData {
    let q: usize = groups.iter().sum();
    let x = DMatrix::from_fn(n, p, |_, _| normal(rng));
    let rows = (0..n)
        .map(|_| {
            let nnz = rng.random_range(1..=3.min(q));
            let mut cols: Vec<usize> = Vec::new();
            while cols.len() < nnz {
                let c = rng.random_range(0..q);
                if !cols.contains(&c) {
                    cols.push(c);
                }
            }
            cols.into_iter().map(|c| (c, normal(rng))).collect()
        })
        .collect();
    let y = DVector::from_fn(n, |_, _| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
    GlmmData::new(y, x, SparseRows::new(q, rows).unwrap(), groups.to_vec()).unwrap()
}

pub fn random_theta(rng: &mut ChaCha8Rng, p: usize, k: usize) -> Theta {
    let beta: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
    let sigma2: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
    Theta::from_sigma2(&beta, &sigma2)
}

/// (data, θ on the σ² scale, u) for a random general instance.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (GlmmData, Theta, DVector<f64>) {
    let k = rng.random_range(1..=3);
    let groups: Vec<usize> = (0..k).map(|_| rng.random_range(1..=4)).collect();
    let n = rng.random_range(4..=20);
    let p = rng.random_range(1..=3);
    let data = random_data(rng, n, p, &groups);
    let theta = random_theta(rng, p, k);
    let u = normal_vec(rng, data.q(), 1.0);
    (data, theta, u)
}

pub fn booth_hobert_instance(rng: &mut ChaCha8Rng) -> (GlmmData, Theta, DVector<f64>) {
    let beta = rng.random_range(2.0..7.0);
    let sigma2 = rng.random_range(0.2..2.0);
    let sim = gen_booth_hobert(beta, sigma2, rng.random());
    let theta = Theta::from_sigma2(&[rng.random_range(1.0..6.0)], &[rng.random_range(0.3..1.5)]);
    (sim.data, theta, sim.true_u)
}

pub fn salamander_instance(rng: &mut ChaCha8Rng) -> (GlmmData, Theta, DVector<f64>) {
    let design = default_salamander_design(rng.random());
    let truth = Theta::from_sigma2(&[1.03, 0.32, -1.95, 0.99], &[1.4, 1.25]);
    let sim = gen_salamander(&truth, &design, rng.random()).unwrap();
    let theta = random_theta(rng, 4, 2);
    (sim.data, theta, sim.true_u)
}

/// max_i |a_i − b_i| / max(|b_i|, 1)
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// ‖A − B‖max / max(‖B‖max, 1)
pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax() / b.amax().max(1.0)
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn loglik_on_scale<'a>(data: &'a GlmmData, u: &DVector<f64>, p: usize, scale: Scale) -> impl Fn(&DVector<f64>) -> f64 + 'a {
    let u = u.clone();
    move |v: &DVector<f64>| complete_loglik(&Theta::from_vector(v, p, scale), &u, data).unwrap()
}

/// score_gradient against central differences of complete_loglik.
pub fn score_fd_error(data: &GlmmData, theta: &Theta, u: &DVector<f64>, scale: Scale) -> f64 {
    let th = theta.to_scale(scale);
    let fd = fd_gradient(loglik_on_scale(data, u, th.p(), scale), &th.to_vector(), 1e-5).unwrap();
    rel_err(&score_gradient(&th, u, data).unwrap(), &fd)
}

/// complete_hessian against minus the FD Hessian of complete_loglik.
pub fn hessian_fd_error(data: &GlmmData, theta: &Theta, u: &DVector<f64>, scale: Scale) -> f64 {
    let th = theta.to_scale(scale);
    let fd = fd_hessian(loglik_on_scale(data, u, th.p(), scale), &th.to_vector(), 1e-4).unwrap();
    rel_err_mat(&complete_hessian(&th, u, data).unwrap(), &(-fd))
}

pub fn potential_gradient_fd_error(data: &GlmmData, theta: &Theta, u: &DVector<f64>) -> f64 {
    let fd = fd_gradient(|v| potential_energy(v, theta, data).unwrap(), u, 1e-5).unwrap();
    rel_err(&potential_gradient(u, theta, data).unwrap(), &fd)
}

/// ∇²Q against the FD Jacobian of ∇Q.
pub fn potential_hessian_fd_error(data: &GlmmData, theta: &Theta, u: &DVector<f64>) -> f64 {
    let fd = fd_jacobian(|v| potential_gradient(v, theta, data).unwrap(), u, 1e-4).unwrap();
    rel_err_mat(&potential_hessian(u, theta, data).unwrap(), &fd)
}

/// Σ_i [y_i η_i − log(1 + e^{η_i})], η = Xβ + offset, written out directly.
pub fn logistic_objective(y: &DVector<f64>, x: &DMatrix<f64>, offset: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (0..y.len())
        .map(|i| {
            let eta = (x.row(i) * beta)[0] + offset[i];
            y[i] * eta - (1.0 + eta.exp()).ln()
        })
        .sum()
}

/// Independent maximizer of [`logistic_objective`]: plain Newton from zero
/// with step halving.
pub fn newton_logistic(y: &DVector<f64>, x: &DMatrix<f64>, offset: &DVector<f64>) -> DVector<f64> {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    for _ in 0..100 {
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for i in 0..y.len() {
            let xi = x.row(i).transpose();
            let mu = expit(xi.dot(&beta) + offset[i]);
            g += &xi * (y[i] - mu);
            h += &xi * xi.transpose() * (mu * (1.0 - mu));
        }
        if g.amax() < 1e-13 * y.len() as f64 {
            break;
        }
        let d = h.cholesky().expect("positive definite information").solve(&g);
        let f0 = logistic_objective(y, x, offset, &beta);
        let mut step = 1.0;
        while logistic_objective(y, x, offset, &(&beta + &d * step)) < f0 && step > 1e-10 {
            step *= 0.5;
        }
        beta += d * step;
    }
    beta
}

/// M-step check on one instance: (largest |∂/∂σ²_k| at the output over
/// non-floored components, number of 100 small perturbations that beat it).
pub fn mstep_check(data: &GlmmData, u: &DVector<f64>, rng: &mut ChaCha8Rng) -> (f64, usize) {
    let theta = imsa::estimators::maximize_complete(u, data).unwrap();
    let score = score_gradient(&theta, u, data).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..data.k() {
        if theta.var_components[k] > imsa::estimators::VARIANCE_FLOOR {
            worst = worst.max(score[data.p() + k].abs());
        }
    }
    let best = complete_loglik(&theta, u, data).unwrap();
    let log_theta = theta.to_scale(Scale::LogSigma).to_vector();
    let beaten = (0..100)
        .filter(|_| {
            let v = &log_theta + normal_vec(rng, theta.dim(), 0.01);
            complete_loglik(&Theta::from_vector(&v, data.p(), Scale::LogSigma), u, data).unwrap() > best
        })
        .count();
    (worst, beaten)
}

/// Batch-means standard error of the mean of `xs`.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Data whose Z has no entries, so f(u | y) = N(0, diag(σ²)).
pub fn no_latent_design(groups: Vec<usize>) -> GlmmData {
    let n = 4;
    let q = groups.iter().sum();
    GlmmData::new(
        DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]),
        DMatrix::from_element(n, 1, 1.0),
        SparseRows::new(q, vec![Vec::new(); n]).unwrap(),
        groups,
    )
    .unwrap()
}

/// Per coordinate of a pMALA run on N(0, diag(0.5, 0.5, 3)):
/// (mean, batch-means SE, E[u²]/σ²).
pub fn gaussian_target_moments(mode: PreconditionMode, eps: f64, seed: u64, steps: usize) -> Vec<(f64, f64, f64)> {
    let data = no_latent_design(vec![2, 1]);
    let theta = Theta::from_sigma2(&[0.0], &[0.5, 3.0]);
    let potential = ConditionalPotential::new(&theta, &data).unwrap();
    let precond = build_preconditioner(&theta, &data, mode).unwrap();
    let mut chain = ChainState::new(DVector::zeros(3), eps);
    let mut rng = rng(seed);
    let mut draws = vec![Vec::with_capacity(steps); 3];
    for _ in 0..steps {
        pmala_sweep(&mut chain, &precond, &potential, 1, &mut rng).unwrap();
        for (j, d) in draws.iter_mut().enumerate() {
            d.push(chain.u[j]);
        }
    }
    let var = [0.5, 0.5, 3.0];
    draws
        .iter()
        .zip(var)
        .map(|(xs, v)| {
            let mean = xs.iter().sum::<f64>() / steps as f64;
            let second = xs.iter().map(|x| x * x).sum::<f64>() / steps as f64;
            (mean, batch_means_se(xs, 100), second / v)
        })
        .collect()
}

/// Textbook MALA with Σ = I, recomputing everything at each step and drawing
/// the proposal noise before the uniform. Returns the final state and the
/// number of accepted moves.
pub fn textbook_mala(
    potential: &ConditionalPotential,
    mut u: DVector<f64>,
    eps: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, usize) {
    let log_q = |to: &DVector<f64>, from: &DVector<f64>| {
        let mean = from - potential.gradient(from) * (eps * eps / 2.0);
        -(to - mean).norm_squared() / (2.0 * eps * eps)
    };
    let mut accepted = 0;
    for _ in 0..steps {
        let z = DVector::from_fn(u.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let w: f64 = rng.random();
        let prop = (&u - potential.gradient(&u) * (eps * eps / 2.0)) + z * eps;
        let log_alpha = potential.energy(&u) - potential.energy(&prop) + log_q(&u, &prop)
            - log_q(&prop, &u);
        if w < log_alpha.exp().min(1.0) {
            u = prop;
            accepted += 1;
        }
    }
    (u, accepted)
}

/// Runs the library identity-mode sweep and the textbook MALA from the same
/// state with the same stream; true when the final states agree bit for bit.
pub fn identity_sweep_matches_textbook(data: &GlmmData, theta: &Theta, u0: &DVector<f64>, eps: f64, steps: usize, seed: u64) -> bool {
    let potential = ConditionalPotential::new(theta, data).unwrap();
    let mut chain = ChainState::new(u0.clone(), eps);
    let ours = pmala_sweep(&mut chain, &Preconditioner::identity(data.q()), &potential, steps, &mut rng(seed)).unwrap();
    let (u, theirs) = textbook_mala(&potential, u0.clone(), eps, steps, &mut rng(seed));
    ours == theirs && chain.u.iter().zip(u.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
}
