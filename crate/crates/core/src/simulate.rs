//! Synthetic data for the two benchmark models.
//!
//! * Booth–Hobert: 10 clusters × 15 observations, P(y_ij = 1 | u_i) =
//!   expit(β·j/15 + u_i), u_i ~ N(0, σ²).
//! * Salamander mating: 360 female/male pairs, fixed effects for the four
//!   species combinations (A/A, A/B, B/A, B/B), crossed female and male
//!   random effects with separate variances.
//!
//! The true latent vector is returned with each dataset for diagnostics only.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::{expit, GlmmData, ModelError, SparseRows, Theta};
use crate::rng::{self, purpose, StreamRng};

pub const BOOTH_HOBERT_CLUSTERS: usize = 10;
pub const BOOTH_HOBERT_CLUSTER_SIZE: usize = 15;

pub const SALAMANDER_ANIMALS: usize = 60;
pub const SALAMANDER_PAIRS: usize = 360;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid salamander design: {0}")]
    InvalidDesign(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: GlmmData,
    /// Latent vector the responses were drawn with.
    pub true_u: DVector<f64>,
}

fn draw_normal(rng: &mut StreamRng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    }
}

fn draw_responses(eta: &DVector<f64>, rng: &mut StreamRng) -> DVector<f64> {
    eta.map(|e| {
        let u: f64 = rng.random();
        if u < expit(e) {
            1.0
        } else {
            0.0
        }
    })
}

/// Booth–Hobert dataset: n = 150, p = 1, q = 10, K = 1, rows ordered by
/// cluster then j.
pub fn gen_booth_hobert(beta: f64, sigma2: f64, seed: u64) -> SimulatedData {
    assert!(sigma2 >= 0.0 && sigma2.is_finite(), "sigma2 must be non-negative");
    let mut rng = rng::stream(seed, &[purpose::DATASET]);
    let sd = sigma2.sqrt();
    let true_u = DVector::from_fn(BOOTH_HOBERT_CLUSTERS, |_, _| draw_normal(&mut rng, sd));
    let n = BOOTH_HOBERT_CLUSTERS * BOOTH_HOBERT_CLUSTER_SIZE;
    let x = DMatrix::from_fn(n, 1, |r, _| {
        (r % BOOTH_HOBERT_CLUSTER_SIZE + 1) as f64 / BOOTH_HOBERT_CLUSTER_SIZE as f64
    });
    let z = SparseRows::new(
        BOOTH_HOBERT_CLUSTERS,
        (0..n)
            .map(|r| vec![(r / BOOTH_HOBERT_CLUSTER_SIZE, 1.0)])
            .collect(),
    )
    .expect("valid cluster design");
    let eta = &x * beta + z.mul_vec(&true_u);
    let y = draw_responses(&eta, &mut rng);
    let data = GlmmData::new(y, x, z, vec![BOOTH_HOBERT_CLUSTERS]).expect("valid dataset");
    SimulatedData { data, true_u }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    A,
    B,
}

impl Species {
    pub fn label(self) -> &'static str {
        match self {
            Species::A => "A",
            Species::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "A" | "a" => Some(Species::A),
            "B" | "b" => Some(Species::B),
            _ => None,
        }
    }
}

/// One observed female/male pairing. Ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SalamanderPair {
    pub female: usize,
    pub male: usize,
    pub female_species: Species,
    pub male_species: Species,
}

impl SalamanderPair {
    /// Index of the species combination in the order A/A, A/B, B/A, B/B.
    pub fn combination(&self) -> usize {
        match (self.female_species, self.male_species) {
            (Species::A, Species::A) => 0,
            (Species::A, Species::B) => 1,
            (Species::B, Species::A) => 2,
            (Species::B, Species::B) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalamanderDesign {
    pairs: Vec<SalamanderPair>,
}

impl SalamanderDesign {
    pub fn new(pairs: Vec<SalamanderPair>) -> Result<Self, SimulateError> {
        let design = Self { pairs };
        design.validate()?;
        Ok(design)
    }

    pub fn pairs(&self) -> &[SalamanderPair] {
        &self.pairs
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::InvalidDesign(m));
        if self.pairs.len() != SALAMANDER_PAIRS {
            return bad(format!(
                "expected {SALAMANDER_PAIRS} pairs, found {}",
                self.pairs.len()
            ));
        }
        let mut female_species = [None; SALAMANDER_ANIMALS];
        let mut male_species = [None; SALAMANDER_ANIMALS];
        let mut seen = std::collections::HashSet::new();
        for p in &self.pairs {
            for (id, sex) in [(p.female, "female"), (p.male, "male")] {
                if !(1..=SALAMANDER_ANIMALS).contains(&id) {
                    return bad(format!("{sex} id {id} outside 1..={SALAMANDER_ANIMALS}"));
                }
            }
            for (slot, species, sex, id) in [
                (&mut female_species[p.female - 1], p.female_species, "female", p.female),
                (&mut male_species[p.male - 1], p.male_species, "male", p.male),
            ] {
                match slot {
                    None => *slot = Some(species),
                    Some(s) if *s != species => {
                        return bad(format!("{sex} {id} listed with both species"))
                    }
                    _ => {}
                }
            }
            if !seen.insert((p.female, p.male)) {
                return bad(format!("pair ({}, {}) repeated", p.female, p.male));
            }
        }
        Ok(())
    }
}

/// Balanced crossed design resembling the classical salamander experiment.
///
/// Three blocks of 20 females and 20 males (10 of each species per sex).
/// Within a block every animal is paired with 3 partners of each species, so
/// each animal appears in 6 pairs and each block contributes 120 pairs.
/// Partner assignment inside a species cell is a seeded shuffle followed by
/// a cyclic 3-regular matching.
pub fn default_salamander_design(seed: u64) -> SalamanderDesign {
    let mut rng = rng::stream(seed, &[purpose::DESIGN]);
    let species_of = |local: usize| if local < 10 { Species::A } else { Species::B };
    let mut pairs = Vec::with_capacity(SALAMANDER_PAIRS);
    for block in 0..3 {
        let base = 20 * block;
        for fs in [Species::A, Species::B] {
            for ms in [Species::A, Species::B] {
                let offset = |s: Species| if s == Species::A { 0 } else { 10 };
                let females: Vec<usize> = (0..10).map(|i| base + offset(fs) + i + 1).collect();
                let mut males: Vec<usize> = (0..10).map(|i| base + offset(ms) + i + 1).collect();
                males.shuffle(&mut rng);
                for (i, &f) in females.iter().enumerate() {
                    for s in 0..3 {
                        let m = males[(i + s) % 10];
                        pairs.push(SalamanderPair {
                            female: f,
                            male: m,
                            female_species: species_of((f - 1) % 20),
                            male_species: species_of((m - 1) % 20),
                        });
                    }
                }
            }
        }
    }
    pairs.sort_by_key(|p| (p.female, p.male));
    SalamanderDesign::new(pairs).expect("default design is valid")
}

/// GlmmData for a salamander design: one-hot species-combination X (p = 4),
/// Z with a female column (0..60) and a male column (60..120) per row.
pub fn salamander_data(design: &SalamanderDesign, y: DVector<f64>) -> Result<GlmmData, SimulateError> {
    let n = design.pairs.len();
    let x = DMatrix::from_fn(n, 4, |r, c| {
        if design.pairs[r].combination() == c {
            1.0
        } else {
            0.0
        }
    });
    let z = SparseRows::new(
        2 * SALAMANDER_ANIMALS,
        design
            .pairs
            .iter()
            .map(|p| vec![(p.female - 1, 1.0), (SALAMANDER_ANIMALS + p.male - 1, 1.0)])
            .collect(),
    )?;
    Ok(GlmmData::new(
        y,
        x,
        z,
        vec![SALAMANDER_ANIMALS, SALAMANDER_ANIMALS],
    )?)
}

/// Salamander dataset drawn at `theta` (β of length 4, two variances).
pub fn gen_salamander(
    theta: &Theta,
    design: &SalamanderDesign,
    seed: u64,
) -> Result<SimulatedData, SimulateError> {
    design.validate()?;
    if theta.p() != 4 || theta.k() != 2 {
        return Err(SimulateError::InvalidParameters(format!(
            "salamander model needs p = 4, K = 2; got p = {}, K = {}",
            theta.p(),
            theta.k()
        )));
    }
    theta.validate()?;
    let sigma2 = theta.sigma2();
    let mut rng = rng::stream(seed, &[purpose::DATASET]);
    let true_u = DVector::from_fn(2 * SALAMANDER_ANIMALS, |j, _| {
        draw_normal(&mut rng, sigma2[j / SALAMANDER_ANIMALS].sqrt())
    });
    let template = salamander_data(design, DVector::zeros(design.pairs.len()))?;
    let eta = template.x() * &theta.beta + template.z().mul_vec(&true_u);
    let y = draw_responses(&eta, &mut rng);
    let data = salamander_data(design, y)?;
    Ok(SimulatedData { data, true_u })
}
