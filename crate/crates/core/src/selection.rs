//! Choosing the next query: uniformly random pairs, mean-cut max-variance
//! (MCMV) scoring of random candidates, and direct construction of the
//! MCMV-ideal pair along the posterior's principal axis.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attribute::{uniform_point, AttributeVector, Query, DEGENERACY_TOLERANCE};
use crate::error::{Error, Result};
use crate::likelihood::NoiseConstant;
use crate::mcmc::{PosteriorMoments, EIGENVALUE_FLOOR};
use crate::seed::rng_from_seed;

/// Spacing used when the posterior has collapsed to a point.
const COLLAPSED_SPACING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    BestOfN,
    ClosedForm,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::BestOfN, Strategy::ClosedForm];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::BestOfN => "best_of_n",
            Strategy::ClosedForm => "closed_form",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "best_of_n" => Ok(Strategy::BestOfN),
            "closed_form" => Ok(Strategy::ClosedForm),
            other => Err(Error::invalid(format!(
                "unknown strategy {other:?} (expected random, best_of_n or closed_form)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    /// Candidate pool size for `best_of_n`.
    pub n_candidates: usize,
    /// Weight of the mean-cut term.
    pub lambda: f64,
    /// Half-distance between closed-form query members, in posterior standard
    /// deviations along the principal axis. `None` spaces the members as far
    /// apart as the unit box allows.
    pub spacing_stddevs: Option<f64>,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::ClosedForm,
            n_candidates: 500,
            lambda: 1.0,
            spacing_stddevs: None,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy == Strategy::BestOfN && self.n_candidates < 2 {
            return Err(Error::invalid("n_candidates must be >= 2 for best_of_n"));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if let Some(s) = self.spacing_stddevs {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid("spacing_stddevs must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Hyperplane `normal · a = offset` of points equidistant from both members.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl QueryPlane {
    pub fn norm(&self) -> f64 {
        self.normal.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Signed distance from `point` to the plane, positive on the first member's side.
    pub fn signed_distance(&self, point: &[f64]) -> f64 {
        let dot: f64 = self.normal.iter().zip(point).map(|(v, p)| v * p).sum();
        (dot - self.offset) / self.norm()
    }
}

pub fn query_plane(q: &Query) -> Result<QueryPlane> {
    let a = q.first().as_slice();
    let b = q.second().as_slice();
    let normal: Vec<f64> = a.iter().zip(b).map(|(x, y)| 2.0 * (x - y)).collect();
    let offset = a.iter().map(|x| x * x).sum::<f64>() - b.iter().map(|y| y * y).sum::<f64>();
    let plane = QueryPlane { normal, offset };
    if plane.norm() == 0.0 {
        return Err(Error::invalid("degenerate query has no bisecting plane"));
    }
    Ok(plane)
}

/// `k·σ_q − λ·|μ_q|` where `σ_q = vᵀΣv` is the posterior variance along the
/// query normal and `μ_q` the signed distance from the posterior mean to the
/// bisecting plane. Higher is better.
pub fn mcmv_utility(q: &Query, posterior: &PosteriorMoments, k: NoiseConstant, lambda: f64) -> f64 {
    let plane = match query_plane(q) {
        Ok(p) => p,
        Err(_) => return f64::NEG_INFINITY,
    };
    let v = &plane.normal;
    let cov = &posterior.covariance;
    let d = v.len();
    let mut variance = 0.0;
    for i in 0..d {
        for j in 0..d {
            variance += v[i] * cov[(i, j)] * v[j];
        }
    }
    let mean_cut = plane.signed_distance(&posterior.mean);
    k.value() * variance - lambda * mean_cut.abs()
}

fn draw_pair<R: Rng>(rng: &mut R, d: usize) -> Option<Query> {
    let first = uniform_point(rng, d);
    let second = uniform_point(rng, d);
    Query::new(first, second).ok()
}

/// Both members uniform on `[0, 1]^d`, redrawn until non-degenerate.
pub fn select_random(d: usize, seed: u64) -> Result<Query> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    loop {
        if let Some(q) = draw_pair(&mut rng, d) {
            return Ok(q);
        }
    }
}

/// Scores `cfg.n_candidates` uniform pairs by MCMV utility and keeps the best;
/// ties go to the earliest candidate.
pub fn select_best_of_n(
    posterior: &PosteriorMoments,
    cfg: &SelectionConfig,
    k: NoiseConstant,
) -> Result<Query> {
    let d = posterior.dim();
    if cfg.n_candidates == 0 {
        return Err(Error::invalid("n_candidates must be >= 1"));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let candidates: Vec<Query> = (0..cfg.n_candidates)
        .filter_map(|_| draw_pair(&mut rng, d))
        .collect();
    let mut best: Option<(f64, &Query)> = None;
    for q in &candidates {
        let u = mcmv_utility(q, posterior, k, cfg.lambda);
        if best.is_none_or(|(bu, _)| u > bu) {
            best = Some((u, q));
        }
    }
    match best {
        Some((_, q)) => Ok(q.clone()),
        None => select_random(d, cfg.seed),
    }
}

/// Largest `s ≤ s_max` with `center ± s·dir` inside the unit box.
fn shrink_to_box(center: &[f64], dir: &[f64], s_max: f64) -> f64 {
    center.iter().zip(dir).fold(s_max, |s, (&m, &u)| {
        if u.abs() < f64::EPSILON {
            s
        } else {
            s.min(m.min(1.0 - m).max(0.0) / u.abs())
        }
    })
}

/// The pair `(m + s·u, m − s·u)` with `m` the posterior mean and `u` the top
/// covariance eigenvector. `s = spacing_stddevs·√λ₁` (unbounded when no
/// spacing is configured) is shrunk symmetrically until both members lie in
/// the box, so the bisecting plane passes through `m` exactly.
pub fn select_closed_form(posterior: &PosteriorMoments, cfg: &SelectionConfig) -> Result<Query> {
    let d = posterior.dim();
    let mean: Vec<f64> = posterior.mean.iter().map(|c| c.clamp(0.0, 1.0)).collect();
    let (lambda1, axis) = posterior.principal_axis();
    let (dir, spacing) = if lambda1 < EIGENVALUE_FLOOR {
        let mut rng = rng_from_seed(cfg.seed);
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        u.iter_mut().for_each(|c| *c /= norm);
        (u, COLLAPSED_SPACING)
    } else {
        let spacing = cfg
            .spacing_stddevs
            .map_or(f64::INFINITY, |k| k * lambda1.sqrt());
        (axis, spacing)
    };
    let s = shrink_to_box(&mean, &dir, spacing);
    if 4.0 * s * s < DEGENERACY_TOLERANCE {
        return select_random(d, cfg.seed);
    }
    let first = AttributeVector::clamped(mean.iter().zip(&dir).map(|(m, u)| m + s * u).collect());
    let second = AttributeVector::clamped(mean.iter().zip(&dir).map(|(m, u)| m - s * u).collect());
    Query::new(first, second)
}

/// Dispatches on `cfg.strategy`.
pub fn select_query(
    posterior: &PosteriorMoments,
    cfg: &SelectionConfig,
    k: NoiseConstant,
) -> Result<Query> {
    match cfg.strategy {
        Strategy::Random => select_random(posterior.dim(), cfg.seed),
        Strategy::BestOfN => select_best_of_n(posterior, cfg, k),
        Strategy::ClosedForm => select_closed_form(posterior, cfg),
    }
}
