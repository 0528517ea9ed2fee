//! Attribute space geometry: points in the unit hypercube `[0, 1]^d` and the
//! paired-comparison queries posed over them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Queries whose members are closer than this (squared) are degenerate: the
/// likelihood is identically 0.5 and they carry no information.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// A point in the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AttributeVector(Vec<f64>);

impl AttributeVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("attribute vector must have dimension >= 1"));
        }
        if let Some((i, c)) = coords
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_finite() || !(0.0..=1.0).contains(*c))
        {
            return Err(Error::invalid(format!(
                "coordinate {i} = {c} lies outside [0, 1]"
            )));
        }
        Ok(Self(coords))
    }

    /// Builds a vector by clamping each coordinate into `[0, 1]`.
    pub(crate) fn clamped(coords: Vec<f64>) -> Self {
        Self(coords.into_iter().map(|c| c.clamp(0.0, 1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for AttributeVector {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<AttributeVector> for Vec<f64> {
    fn from(v: AttributeVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for AttributeVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// An unanswered paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuery")]
pub struct Query {
    first: AttributeVector,
    second: AttributeVector,
}

#[derive(Deserialize)]
struct RawQuery {
    first: AttributeVector,
    second: AttributeVector,
}

impl TryFrom<RawQuery> for Query {
    type Error = Error;

    fn try_from(raw: RawQuery) -> Result<Self> {
        Query::new(raw.first, raw.second)
    }
}

impl Query {
    /// Rejects mismatched dimensions and degenerate pairs.
    pub fn new(first: AttributeVector, second: AttributeVector) -> Result<Self> {
        let d2 = squared_distance(&first, &second)?;
        if d2 < DEGENERACY_TOLERANCE {
            return Err(Error::invalid(format!(
                "degenerate query: squared distance {d2:e} below {DEGENERACY_TOLERANCE:e}"
            )));
        }
        Ok(Self { first, second })
    }

    pub fn first(&self) -> &AttributeVector {
        &self.first
    }

    pub fn second(&self) -> &AttributeVector {
        &self.second
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    pub fn swapped(&self) -> Query {
        Query {
            first: self.second.clone(),
            second: self.first.clone(),
        }
    }

    /// Records the oracle's choice.
    pub fn answer(&self, first_preferred: bool) -> AnsweredQuery {
        if first_preferred {
            AnsweredQuery::new_unchecked(self.first.clone(), self.second.clone())
        } else {
            AnsweredQuery::new_unchecked(self.second.clone(), self.first.clone())
        }
    }
}

/// A paired comparison with the oracle's answer: `preferred` won over `rejected`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAnswered")]
pub struct AnsweredQuery {
    preferred: AttributeVector,
    rejected: AttributeVector,
}

#[derive(Deserialize)]
struct RawAnswered {
    preferred: AttributeVector,
    rejected: AttributeVector,
}

impl TryFrom<RawAnswered> for AnsweredQuery {
    type Error = Error;

    fn try_from(raw: RawAnswered) -> Result<Self> {
        AnsweredQuery::new(raw.preferred, raw.rejected)
    }
}

impl AnsweredQuery {
    pub fn new(preferred: AttributeVector, rejected: AttributeVector) -> Result<Self> {
        check_dims(preferred.dim(), rejected.dim())?;
        Ok(Self {
            preferred,
            rejected,
        })
    }

    fn new_unchecked(preferred: AttributeVector, rejected: AttributeVector) -> Self {
        Self {
            preferred,
            rejected,
        }
    }

    pub fn preferred(&self) -> &AttributeVector {
        &self.preferred
    }

    pub fn rejected(&self) -> &AttributeVector {
        &self.rejected
    }

    pub fn dim(&self) -> usize {
        self.preferred.dim()
    }

    /// The same pair with the answer reversed.
    pub fn reversed(&self) -> AnsweredQuery {
        Self::new_unchecked(self.rejected.clone(), self.preferred.clone())
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Squared Euclidean distance on raw coordinates; callers check dimensions.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn squared_distance(a: &AttributeVector, b: &AttributeVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(sq_dist(a.as_slice(), b.as_slice()))
}

pub(crate) fn uniform_point<R: Rng + ?Sized>(rng: &mut R, d: usize) -> AttributeVector {
    AttributeVector((0..d).map(|_| rng.random::<f64>()).collect())
}

/// `n` points drawn uniformly from `[0, 1]^d`.
pub fn sample_uniform(d: usize, n: usize, seed: u64) -> Result<Vec<AttributeVector>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("count must be >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| uniform_point(&mut rng, d)).collect())
}
