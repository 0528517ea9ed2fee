//! Simulated ideal-point oracles and maximum-likelihood calibration of the
//! noise constant from labelled triplets.

use std::cmp::Ordering;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attribute::{check_dims, sq_dist, uniform_point, AnsweredQuery, AttributeVector, Query};
use crate::error::{Error, Result};
use crate::likelihood::{log_sigmoid, NoiseConstant};
use crate::seed::{derive_seed, rng_from_seed};

/// Default search bracket for the calibrated noise constant.
pub const K_MIN: f64 = 0.1;
pub const K_MAX: f64 = 1000.0;

const GOLDEN_RELATIVE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub ideal_point: AttributeVector,
    pub noise_stddev: f64,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(ideal_point: AttributeVector, noise_stddev: f64, seed: u64) -> Result<Self> {
        if !(noise_stddev.is_finite() && noise_stddev >= 0.0) {
            return Err(Error::invalid("noise_stddev must be finite and >= 0"));
        }
        Ok(Self {
            ideal_point,
            noise_stddev,
            seed,
        })
    }

    pub fn noiseless(ideal_point: AttributeVector) -> Self {
        Self {
            ideal_point,
            noise_stddev: 0.0,
            seed: 0,
        }
    }
}

fn noise_draw<R: Rng>(rng: &mut R, stddev: f64) -> f64 {
    if stddev == 0.0 {
        0.0
    } else {
        Normal::new(0.0, stddev)
            .expect("validated stddev")
            .sample(rng)
    }
}

/// Answers `q`, the `query_index`-th query of this oracle. The answer is the
/// member nearer to the ideal point after adding one Gaussian draw to the
/// squared-distance margin; exact ties go to the first member.
///
/// The draw is signed relative to a lexicographic ordering of the two members,
/// so presenting the same pair in the other order yields the same preferred
/// member.
pub fn answer(oracle: &OracleConfig, q: &Query, query_index: u64) -> Result<AnsweredQuery> {
    check_dims(oracle.ideal_point.dim(), q.dim())?;
    let target = oracle.ideal_point.as_slice();
    let (first, second) = (q.first().as_slice(), q.second().as_slice());
    let margin = sq_dist(target, second) - sq_dist(target, first);
    let mut rng = rng_from_seed(derive_seed(oracle.seed, &[query_index]));
    let mut noise = noise_draw(&mut rng, oracle.noise_stddev);
    if first.partial_cmp(second) == Some(Ordering::Greater) {
        noise = -noise;
    }
    Ok(q.answer(margin + noise >= 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: AttributeVector,
    pub positive: AttributeVector,
    pub negative: AttributeVector,
}

impl Triplet {
    /// `‖anchor − negative‖² − ‖anchor − positive‖²`.
    pub fn margin(&self) -> f64 {
        let a = self.anchor.as_slice();
        sq_dist(a, self.negative.as_slice()) - sq_dist(a, self.positive.as_slice())
    }
}

/// Uniform anchors and candidate pairs, labelled with the noisy oracle rule.
pub fn generate_triplets(noise_stddev: f64, count: usize, d: usize, seed: u64) -> Result<Vec<Triplet>> {
    if count == 0 {
        return Err(Error::invalid("triplet count must be >= 1"));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if !(noise_stddev.is_finite() && noise_stddev >= 0.0) {
        return Err(Error::invalid("noise_stddev must be finite and >= 0"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..count)
        .map(|_| {
            let anchor = uniform_point(&mut rng, d);
            let x = uniform_point(&mut rng, d);
            let y = uniform_point(&mut rng, d);
            let a = anchor.as_slice();
            let margin = sq_dist(a, y.as_slice()) - sq_dist(a, x.as_slice());
            let noise = noise_draw(&mut rng, noise_stddev);
            let (positive, negative) = if margin + noise >= 0.0 { (x, y) } else { (y, x) };
            Triplet {
                anchor,
                positive,
                negative,
            }
        })
        .collect())
}

/// Log-likelihood of the triplet labels under slope `k`.
pub fn triplet_log_likelihood(margins: &[f64], k: f64) -> f64 {
    margins.iter().map(|m| log_sigmoid(k * m)).sum()
}

/// Maximum-likelihood `k_q` in `[k_min, k_max]`, by golden-section search on
/// `ln k`; the bracket endpoints are also compared so that a monotone
/// objective returns the bound exactly.
pub fn fit_noise_constant(triplets: &[Triplet], k_min: f64, k_max: f64) -> Result<NoiseConstant> {
    if triplets.is_empty() {
        return Err(Error::invalid("cannot fit a noise constant to zero triplets"));
    }
    if !(k_min > 0.0 && k_min < k_max && k_max.is_finite()) {
        return Err(Error::invalid(format!(
            "invalid bracket [{k_min}, {k_max}]"
        )));
    }
    let margins: Vec<f64> = triplets.iter().map(Triplet::margin).collect();
    let objective = |log_k: f64| triplet_log_likelihood(&margins, log_k.exp());

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (k_min.ln(), k_max.ln());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    // Interval width in ln k is the relative tolerance in k.
    while hi - lo > GOLDEN_RELATIVE_TOLERANCE {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        }
    }
    let interior = (0.5 * (lo + hi)).exp().clamp(k_min, k_max);
    let best = [interior, k_min, k_max]
        .into_iter()
        .map(|k| (k, triplet_log_likelihood(&margins, k)))
        .fold((interior, f64::NEG_INFINITY), |acc, (k, f)| if f > acc.1 { (k, f) } else { acc });
    NoiseConstant::new(best.0)
}

/// Columns `a_a[0..d)`, `a_p[0..d)`, `a_n[0..d)`.
pub fn write_triplets_csv(path: &Path, triplets: &[Triplet]) -> Result<()> {
    let d = triplets.first().map(|t| t.anchor.dim()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{other:?}")),
    })?;
    let mut header = Vec::with_capacity(3 * d);
    for prefix in ["a_a", "a_p", "a_n"] {
        header.extend((0..d).map(|i| format!("{prefix}[{i}]")));
    }
    w.write_record(&header)?;
    for t in triplets {
        let row: Vec<String> = [&t.anchor, &t.positive, &t.negative]
            .iter()
            .flat_map(|v| v.as_slice().iter().map(|c| c.to_string()))
            .collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_triplets_csv(path: &Path) -> Result<Vec<Triplet>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width == 0 || width % 3 != 0 {
        return Err(Error::invalid(format!(
            "triplet csv must have 3·d columns, found {width}"
        )));
    }
    let d = width / 3;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        out.push(Triplet {
            anchor: AttributeVector::new(vals[..d].to_vec())?,
            positive: AttributeVector::new(vals[d..2 * d].to_vec())?,
            negative: AttributeVector::new(vals[2 * d..].to_vec())?,
        });
    }
    Ok(out)
}
