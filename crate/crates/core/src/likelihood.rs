//! Logistic paired-comparison likelihood under the ideal-point model and the
//! unnormalized log-posterior with a uniform prior on the unit box.

use serde::{Deserialize, Serialize};

use crate::attribute::{check_dims, sq_dist, AnsweredQuery};
use crate::error::{Error, Result};

/// Logistic slope `k_q`; larger values mean answers are trusted more.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseConstant(f64);

impl NoiseConstant {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::invalid(format!(
                "noise constant must be finite and > 0, got {k}"
            )));
        }
        Ok(Self(k))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for NoiseConstant {
    fn default() -> Self {
        Self(10.0)
    }
}

impl TryFrom<f64> for NoiseConstant {
    type Error = Error;

    fn try_from(k: f64) -> Result<Self> {
        Self::new(k)
    }
}

impl From<NoiseConstant> for f64 {
    fn from(k: NoiseConstant) -> f64 {
        k.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large `|x|`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `‖a − rejected‖² − ‖a − preferred‖²`: positive when `a` sits on the
/// preferred side of the bisecting plane.
pub(crate) fn margin(a: &[f64], q: &AnsweredQuery) -> f64 {
    sq_dist(a, q.rejected().as_slice()) - sq_dist(a, q.preferred().as_slice())
}

/// Probability that an oracle with ideal point `a` gives answer `q`.
pub fn query_likelihood(a: &[f64], q: &AnsweredQuery, k: NoiseConstant) -> Result<f64> {
    check_dims(q.dim(), a.len())?;
    if a.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("attribute coordinates must be finite"));
    }
    Ok(sigmoid(k.value() * margin(a, q)))
}

/// Sum of log-likelihoods of `answered` at `a`, or `-inf` outside `[0, 1]^d`.
pub fn log_posterior_unnormalized(
    a: &[f64],
    answered: &[AnsweredQuery],
    k: NoiseConstant,
) -> Result<f64> {
    for q in answered {
        check_dims(a.len(), q.dim())?;
    }
    if !in_unit_box(a) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(answered
        .iter()
        .map(|q| log_sigmoid(k.value() * margin(a, q)))
        .sum())
}

pub(crate) fn in_unit_box(a: &[f64]) -> bool {
    a.iter().all(|c| (0.0..=1.0).contains(c))
}

/// Answered queries rewritten as scaled half-space constraints
/// `k · (w·a − c)`, with `w = 2(p − n)` and `c = ‖p‖² − ‖n‖²`, for the
/// sampler's inner loop.
#[derive(Debug, Clone)]
pub(crate) struct CompiledPosterior {
    dim: usize,
    normals: Vec<f64>,
    offsets: Vec<f64>,
}

impl CompiledPosterior {
    pub(crate) fn new(dim: usize, answered: &[AnsweredQuery], k: NoiseConstant) -> Result<Self> {
        let mut normals = Vec::with_capacity(dim * answered.len());
        let mut offsets = Vec::with_capacity(answered.len());
        for q in answered {
            check_dims(dim, q.dim())?;
            let p = q.preferred().as_slice();
            let n = q.rejected().as_slice();
            normals.extend(p.iter().zip(n).map(|(pi, ni)| 2.0 * k.value() * (pi - ni)));
            let c: f64 = p.iter().zip(n).map(|(pi, ni)| pi * pi - ni * ni).sum();
            offsets.push(k.value() * c);
        }
        Ok(Self {
            dim,
            normals,
            offsets,
        })
    }

    #[inline]
    pub(crate) fn log_density(&self, a: &[f64]) -> f64 {
        if !in_unit_box(a) {
            return f64::NEG_INFINITY;
        }
        self.normals
            .chunks_exact(self.dim)
            .zip(&self.offsets)
            .map(|(w, c)| {
                let dot: f64 = w.iter().zip(a).map(|(wi, ai)| wi * ai).sum();
                log_sigmoid(dot - c)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::AttributeVector;
    use proptest::prelude::*;

    fn v(c: &[f64]) -> AttributeVector {
        AttributeVector::new(c.to_vec()).unwrap()
    }

    fn aq(p: &[f64], n: &[f64]) -> AnsweredQuery {
        AnsweredQuery::new(v(p), v(n)).unwrap()
    }

    fn k(x: f64) -> NoiseConstant {
        NoiseConstant::new(x).unwrap()
    }

    #[test]
    fn equidistant_is_one_half() {
        let q = aq(&[0.4, 0.5], &[0.6, 0.5]);
        for kk in [0.1, 1.0, 10.0, 1000.0] {
            assert_eq!(query_likelihood(&[0.5, 0.5], &q, k(kk)).unwrap(), 0.5);
        }
    }

    #[test]
    fn hand_evaluated_case() {
        let q = aq(&[0.1, 0.0], &[0.3, 0.0]);
        let p = query_likelihood(&[0.0, 0.0], &q, k(10.0)).unwrap();
        let expected = 1.0 / (1.0 + (-0.8f64).exp());
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 0.68997).abs() < 1e-5);
    }

    #[test]
    fn non_finite_and_mismatch_rejected() {
        let q = aq(&[0.1, 0.0], &[0.3, 0.0]);
        assert!(query_likelihood(&[f64::NAN, 0.0], &q, k(1.0)).is_err());
        assert!(query_likelihood(&[0.0], &q, k(1.0)).is_err());
        assert!(NoiseConstant::new(0.0).is_err());
        assert!(NoiseConstant::new(f64::INFINITY).is_err());
    }

    #[test]
    fn log_posterior_basics() {
        assert_eq!(log_posterior_unnormalized(&[0.2, 0.9], &[], k(10.0)).unwrap(), 0.0);
        assert_eq!(
            log_posterior_unnormalized(&[1.2, 0.5], &[], k(10.0)).unwrap(),
            f64::NEG_INFINITY
        );
        let q = aq(&[0.1, 0.0], &[0.3, 0.0]);
        let a = [0.05, 0.7];
        let lp = log_posterior_unnormalized(&a, std::slice::from_ref(&q), k(10.0)).unwrap();
        let direct = query_likelihood(&a, &q, k(10.0)).unwrap().ln();
        assert!((lp - direct).abs() < 1e-12);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
    }

    fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0..=1.0f64, d)
    }

    proptest! {
        #[test]
        fn likelihood_bounds_and_antisymmetry(
            (a, p, n) in (1usize..4).prop_flat_map(|d| (point(d), point(d), point(d))),
            kk in 0.01..5.0f64,
        ) {
            let q = aq(&p, &n);
            let l = query_likelihood(&a, &q, k(kk)).unwrap();
            let r = query_likelihood(&a, &q.reversed(), k(kk)).unwrap();
            prop_assert!(l > 0.0 && l < 1.0);
            prop_assert!((l + r - 1.0).abs() < 1e-12);
        }

        #[test]
        fn likelihood_nondecreasing_in_k(
            (a, p, n) in (1usize..4).prop_flat_map(|d| (point(d), point(d), point(d))),
            k1 in 0.01..50.0f64,
            dk in 0.0..50.0f64,
        ) {
            let q = aq(&p, &n);
            prop_assume!(margin(&a, &q) > 0.0);
            let l1 = query_likelihood(&a, &q, k(k1)).unwrap();
            let l2 = query_likelihood(&a, &q, k(k1 + dk)).unwrap();
            prop_assert!(l2 >= l1);
        }

        #[test]
        fn likelihood_increases_toward_preferred(
            p in point(2), n in point(2), t1 in 0.0..1.0f64, dt in 0.001..0.5f64,
        ) {
            let q = aq(&p, &n);
            prop_assume!(sq_dist(&p, &n) > 1e-4);
            let along = |t: f64| -> Vec<f64> {
                n.iter().zip(&p).map(|(ni, pi)| ni + t * (pi - ni)).collect()
            };
            let t2 = (t1 + dt).min(1.0);
            prop_assume!(t2 > t1);
            let l1 = query_likelihood(&along(t1), &q, k(2.0)).unwrap();
            let l2 = query_likelihood(&along(t2), &q, k(2.0)).unwrap();
            prop_assert!(l2 > l1);
        }

        #[test]
        fn compiled_matches_direct(
            a in point(3),
            qs in prop::collection::vec((point(3), point(3)), 0..12),
            kk in 0.1..100.0f64,
        ) {
            let answered: Vec<_> = qs.iter().map(|(p, n)| aq(p, n)).collect();
            let direct = log_posterior_unnormalized(&a, &answered, k(kk)).unwrap();
            let compiled = CompiledPosterior::new(3, &answered, k(kk)).unwrap().log_density(&a);
            prop_assert!((direct - compiled).abs() <= 1e-9 * (1.0 + direct.abs()));
        }
    }
}
