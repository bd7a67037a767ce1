//! Vectors on the unit hypersphere.
//!
//! Every weight map the library reasons about is compared by direction only,
//! so the basic currency is [`UnitVector`]: a vector whose 2-norm is one.
//! Cosine similarity between two unit vectors is their dot product, clamped
//! to `[-1, 1]` so that rounding never pushes an `acos` out of its domain.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::child_rng;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// A direction in `R^p`, stored with unit 2-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// The antipodal direction.
    pub fn negated(&self) -> UnitVector {
        UnitVector(self.0.iter().map(|v| -v).collect())
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    /// Renormalizes, so slightly-off inputs (e.g. JSON round trips) are accepted.
    fn try_from(values: Vec<f64>) -> Result<Self> {
        normalize(&values)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Self {
        u.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales `v` onto the unit sphere.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.is_empty() {
        return Err(Error::EmptyInput("vector"));
    }
    let n = norm(v);
    if !(n >= ZERO_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

pub fn cosine_similarity(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(dot(&a.0, &b.0).clamp(-1.0, 1.0))
}

/// Angle in `[0, pi]` between two directions.
pub fn angle(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    Ok(cosine_similarity(a, b)?.acos())
}

/// Draws a direction uniformly from the sphere by normalizing an isotropic
/// Gaussian sample.
pub fn random_unit_vector<R: Rng + ?Sized>(p: usize, rng: &mut R) -> UnitVector {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = normalize(&v) {
            return u;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullStats {
    pub mean: f64,
    pub std: f64,
}

const NULL_CHUNK: usize = 256;

/// Monte Carlo mean and standard deviation of the cosine similarity between
/// two independent uniformly random directions in `R^p`.
///
/// Samples are drawn in fixed-size chunks, each from its own RNG stream, so
/// the result does not depend on how many threads run the chunks.
pub fn null_similarity_stats(p: usize, samples: usize, seed: u64) -> Result<NullStats> {
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "dimension must be >= 2, got {p}"
        )));
    }
    if samples < 1000 {
        return Err(Error::InvalidInput(format!(
            "need at least 1000 samples, got {samples}"
        )));
    }
    let chunks = samples.div_ceil(NULL_CHUNK);
    let cosines: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng: ChaCha8Rng = child_rng(seed, chunk as u64);
            let len = NULL_CHUNK.min(samples - chunk * NULL_CHUNK);
            (0..len)
                .map(|_| {
                    let a = random_unit_vector(p, &mut rng);
                    let b = random_unit_vector(p, &mut rng);
                    dot(&a.0, &b.0).clamp(-1.0, 1.0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let count = cosines.len() as f64;
    let mean = cosines.iter().sum::<f64>() / count;
    let var = cosines.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / count;
    Ok(NullStats {
        mean,
        std: var.sqrt(),
    })
}
