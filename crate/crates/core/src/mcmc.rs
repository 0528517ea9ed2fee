//! Random-walk Metropolis sampling of the ideal-point posterior.
//!
//! Each chain starts at an independent uniform draw, proposes isotropic
//! Gaussian steps, and rejects any proposal that leaves the unit box (the
//! prior has zero density there). During burn-in the proposal scale is
//! updated in log space from windowed acceptance rates; it is frozen for the
//! kept draws. Chains run in parallel, each on its own RNG stream seeded with
//! `seed + chain_index`, and are pooled in chain order so the output does not
//! depend on scheduling.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribute::{uniform_point, AnsweredQuery, AttributeVector};
use crate::error::{Error, Result};
use crate::likelihood::{CompiledPosterior, NoiseConstant};
use crate::seed::rng_from_seed;

/// Post-adaptation acceptance rate below which a chain is reported as failed.
pub const MIN_ACCEPTANCE_RATE: f64 = 0.01;
/// Eigenvalue floor applied before taking the log-determinant.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Burn-in steps between proposal-scale updates.
const ADAPT_WINDOW: usize = 50;
/// Gain of the log-scale update `ln s += gain · (rate − target)`.
const ADAPT_GAIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub chains: usize,
    pub burn_in: usize,
    pub keep: usize,
    pub initial_proposal_scale: f64,
    pub target_acceptance: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            burn_in: 1000,
            keep: 1000,
            initial_proposal_scale: 0.2,
            target_acceptance: 0.3,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::invalid("mcmc.chains must be >= 1"));
        }
        if self.keep < 100 {
            return Err(Error::invalid("mcmc.keep must be >= 100"));
        }
        if !(self.initial_proposal_scale.is_finite() && self.initial_proposal_scale > 0.0) {
            return Err(Error::invalid("mcmc.initial_proposal_scale must be > 0"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::invalid("mcmc.target_acceptance must lie in (0, 1)"));
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

/// Mean and covariance of a posterior; all that query selection needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl PosteriorMoments {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::invalid(format!(
                "covariance must be {d}x{d}, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Largest eigenvalue of the covariance and its unit eigenvector, with the
    /// sign fixed so the largest-magnitude component is positive.
    pub fn principal_axis(&self) -> (f64, Vec<f64>) {
        let eig = SymmetricEigen::new(self.covariance.clone());
        let (idx, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty covariance");
        let mut u: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = u
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            u.iter_mut().for_each(|c| *c = -*c);
        }
        (lambda, u)
    }

    pub fn log_det_covariance(&self) -> f64 {
        SymmetricEigen::new(self.covariance.clone())
            .eigenvalues
            .iter()
            .map(|&l| l.max(EIGENVALUE_FLOOR).ln())
            .sum()
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// Pooled post-burn-in draws plus their summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    draws: Vec<AttributeVector>,
    chains: usize,
    moments: PosteriorMoments,
    acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: AttributeVector,
    pub covariance: DMatrix<f64>,
    pub log_det_covariance: f64,
}

impl PosteriorSamples {
    /// Wraps draws (in chain-major order) and computes the sample mean and
    /// unbiased covariance.
    pub fn from_draws(draws: Vec<AttributeVector>, chains: usize, acceptance_rate: f64) -> Result<Self> {
        let d = draws.first().map(AttributeVector::dim).unwrap_or(0);
        if draws.len() < d + 1 || d == 0 {
            return Err(Error::invalid(format!(
                "need at least d + 1 = {} draws, got {}",
                d + 1,
                draws.len()
            )));
        }
        if let Some(bad) = draws.iter().find(|x| x.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        let n = draws.len() as f64;
        let mut mean = vec![0.0; d];
        for x in &draws {
            for (m, c) in mean.iter_mut().zip(x.as_slice()) {
                *m += c;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for x in &draws {
            for ((c, xi), mi) in centered.iter_mut().zip(x.as_slice()).zip(&mean) {
                *c = xi - mi;
            }
            for i in 0..d {
                for j in i..d {
                    cov[(i, j)] += centered[i] * centered[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / (n - 1.0);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(Self {
            draws,
            chains,
            moments: PosteriorMoments {
                mean,
                covariance: cov,
            },
            acceptance_rate,
        })
    }

    pub fn draws(&self) -> &[AttributeVector] {
        &self.draws
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn dim(&self) -> usize {
        self.moments.dim()
    }

    pub fn moments(&self) -> &PosteriorMoments {
        &self.moments
    }

    pub fn mean(&self) -> AttributeVector {
        AttributeVector::clamped(self.moments.mean.clone())
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.moments.covariance
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    /// Every `stride`-th draw starting from the first.
    pub fn strided(&self, stride: usize) -> Vec<AttributeVector> {
        self.draws.iter().step_by(stride.max(1)).cloned().collect()
    }

    /// At most `max_points` draws taken at a fixed stride.
    pub fn preview(&self, max_points: usize) -> Vec<AttributeVector> {
        let stride = self.draws.len().div_ceil(max_points.max(1));
        self.strided(stride)
    }

    pub fn to_json_view(&self, stride: usize) -> PosteriorSamplesJson {
        let d = self.dim();
        PosteriorSamplesJson {
            dimension: d,
            chains: self.chains,
            total_draws: self.draws.len(),
            acceptance_rate: self.acceptance_rate,
            mean: self.moments.mean.clone(),
            covariance: (0..d)
                .map(|i| (0..d).map(|j| self.moments.covariance[(i, j)]).collect())
                .collect(),
            stride: stride.max(1),
            draws: self.strided(stride),
        }
    }

    /// One row per draw: `chain, draw, a0, ..., a{d-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let d = self.dim();
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend((0..d).map(|i| format!("a{i}")));
        w.write_record(&header)?;
        let per_chain = self.draws.len() / self.chains.max(1);
        for (idx, x) in self.draws.iter().enumerate() {
            let mut row = vec![(idx / per_chain).to_string(), (idx % per_chain).to_string()];
            row.extend(x.as_slice().iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        inner.flush().map_err(|e| Error::io(path, e))
    }
}

/// Transport form of [`PosteriorSamples`] with optionally down-sampled draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSamplesJson {
    pub dimension: usize,
    pub chains: usize,
    pub total_draws: usize,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub stride: usize,
    pub draws: Vec<AttributeVector>,
}

pub fn posterior_summary(samples: &PosteriorSamples) -> Result<PosteriorSummary> {
    let d = samples.dim();
    if samples.draws.len() < d + 1 {
        return Err(Error::invalid(format!(
            "need at least d + 1 = {} draws, got {}",
            d + 1,
            samples.draws.len()
        )));
    }
    Ok(PosteriorSummary {
        mean: samples.mean(),
        covariance: samples.moments.covariance.clone(),
        log_det_covariance: samples.moments.log_det_covariance(),
    })
}

struct ChainOutput {
    draws: Vec<AttributeVector>,
    accepted: usize,
    proposal_scale: f64,
}

fn run_chain(
    target: &CompiledPosterior,
    dim: usize,
    cfg: &McmcConfig,
    chain: usize,
) -> ChainOutput {
    let mut rng = rng_from_seed(cfg.seed.wrapping_add(chain as u64));
    let mut x = uniform_point(&mut rng, dim).into_inner();
    let mut lp = target.log_density(&x);
    let mut proposal = vec![0.0; dim];
    let mut scale = cfg.initial_proposal_scale;

    let mut step = |x: &mut Vec<f64>, lp: &mut f64, scale: f64, rng: &mut _| -> bool {
        for (p, xi) in proposal.iter_mut().zip(x.iter()) {
            let z: f64 = Rng::sample(rng, StandardNormal);
            *p = xi + scale * z;
        }
        let lp_new = target.log_density(&proposal);
        if lp_new == f64::NEG_INFINITY {
            return false;
        }
        let u: f64 = Rng::random(rng);
        if u.ln() < lp_new - *lp {
            x.copy_from_slice(&proposal);
            *lp = lp_new;
            true
        } else {
            false
        }
    };

    let mut window_accepted = 0usize;
    for i in 0..cfg.burn_in {
        window_accepted += step(&mut x, &mut lp, scale, &mut rng) as usize;
        if (i + 1) % ADAPT_WINDOW == 0 {
            let rate = window_accepted as f64 / ADAPT_WINDOW as f64;
            scale *= (ADAPT_GAIN * (rate - cfg.target_acceptance)).exp();
            window_accepted = 0;
        }
    }

    let mut draws = Vec::with_capacity(cfg.keep);
    let mut accepted = 0usize;
    for _ in 0..cfg.keep {
        accepted += step(&mut x, &mut lp, scale, &mut rng) as usize;
        draws.push(AttributeVector::clamped(x.clone()));
    }
    ChainOutput {
        draws,
        accepted,
        proposal_scale: scale,
    }
}

/// Draws from `p(a | answered)` under a uniform prior on `[0, 1]^dim`.
pub fn sample_posterior(
    dim: usize,
    answered: &[AnsweredQuery],
    k: NoiseConstant,
    cfg: &McmcConfig,
) -> Result<PosteriorSamples> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    cfg.validate()?;
    let target = CompiledPosterior::new(dim, answered, k)?;

    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| run_chain(&target, dim, cfg, chain))
        .collect();

    let mut total_accepted = 0usize;
    for (chain, out) in outputs.iter().enumerate() {
        let rate = out.accepted as f64 / cfg.keep as f64;
        if rate < MIN_ACCEPTANCE_RATE {
            return Err(Error::ChainFailure {
                chain,
                acceptance_rate: rate,
                floor: MIN_ACCEPTANCE_RATE,
                proposal_scale: out.proposal_scale,
            });
        }
        total_accepted += out.accepted;
    }
    let acceptance_rate = total_accepted as f64 / (cfg.keep * cfg.chains) as f64;
    let draws = outputs.into_iter().flat_map(|o| o.draws).collect();
    PosteriorSamples::from_draws(draws, cfg.chains, acceptance_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::log_posterior_unnormalized;

    fn v(c: &[f64]) -> AttributeVector {
        AttributeVector::new(c.to_vec()).unwrap()
    }

    fn k10() -> NoiseConstant {
        NoiseConstant::new(10.0).unwrap()
    }

    /// Default chains with enough kept draws that Monte Carlo error in the
    /// mean stays well under 0.02.
    fn long_run() -> McmcConfig {
        McmcConfig {
            keep: 10_000,
            ..McmcConfig::default()
        }
    }

    /// Posterior mean on a midpoint grid over the unit square.
    fn grid_mean(answered: &[AnsweredQuery], k: NoiseConstant, n: usize) -> [f64; 2] {
        let (mut z, mut mx, mut my) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let a = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let w = log_posterior_unnormalized(&a, answered, k).unwrap().exp();
                z += w;
                mx += w * a[0];
                my += w * a[1];
            }
        }
        [mx / z, my / z]
    }

    #[test]
    fn prior_moments() {
        let s = sample_posterior(2, &[], k10(), &McmcConfig::default()).unwrap();
        assert_eq!(s.draws().len(), 4000);
        for i in 0..2 {
            assert!((s.moments().mean[i] - 0.5).abs() < 0.03);
            assert!((s.covariance()[(i, i)] - 1.0 / 12.0).abs() < 0.015);
        }
    }

    #[test]
    fn matches_grid_oracle() {
        let one = vec![AnsweredQuery::new(v(&[0.9, 0.5]), v(&[0.1, 0.5])).unwrap()];
        let skewed = vec![
            AnsweredQuery::new(v(&[0.2, 0.7]), v(&[0.6, 0.3])).unwrap(),
            AnsweredQuery::new(v(&[0.4, 0.9]), v(&[0.3, 0.2])).unwrap(),
        ];
        for answered in [vec![], one, skewed] {
            let oracle = grid_mean(&answered, k10(), 200);
            for seed in 0..3 {
                let s = sample_posterior(2, &answered, k10(), &long_run().with_seed(seed)).unwrap();
                for (m, o) in s.moments().mean.iter().zip(oracle) {
                    assert!((m - o).abs() < 0.02, "seed {seed}: mcmc {m} grid {o}");
                }
            }
        }
        let one = [AnsweredQuery::new(v(&[0.9, 0.5]), v(&[0.1, 0.5])).unwrap()];
        assert!(grid_mean(&one, k10(), 200)[0] > 0.5);
    }

    #[test]
    fn deterministic_and_in_box() {
        let answered = [AnsweredQuery::new(v(&[0.3, 0.3]), v(&[0.8, 0.6])).unwrap()];
        let cfg = McmcConfig::default().with_seed(5);
        let a = sample_posterior(2, &answered, NoiseConstant::new(1000.0).unwrap(), &cfg).unwrap();
        let b = sample_posterior(2, &answered, NoiseConstant::new(1000.0).unwrap(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a
            .draws()
            .iter()
            .all(|x| x.as_slice().iter().all(|c| (0.0..=1.0).contains(c))));
        let eig = SymmetricEigen::new(a.covariance().clone()).eigenvalues;
        assert!(eig.iter().all(|&l| l >= -1e-10));
        let c = a.covariance();
        assert_eq!(c[(0, 1)], c[(1, 0)]);
    }

    #[test]
    fn summary_of_degenerate_cloud() {
        let draws = vec![v(&[0.3, 0.7]); 10];
        let s = PosteriorSamples::from_draws(draws, 1, 0.0).unwrap();
        let sum = posterior_summary(&s).unwrap();
        assert!((sum.mean.as_slice()[0] - 0.3).abs() < 1e-12 && (sum.mean.as_slice()[1] - 0.7).abs() < 1e-12);
        assert!(sum.covariance.iter().all(|&c| c.abs() < 1e-15));
        assert!((sum.log_det_covariance - 2.0 * 1e-12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn summary_matches_independent_sums() {
        let draws = crate::attribute::sample_uniform(3, 500, 9).unwrap();
        let s = PosteriorSamples::from_draws(draws.clone(), 1, 1.0).unwrap();
        let n = draws.len() as f64;
        for i in 0..3 {
            let m: f64 = draws.iter().map(|x| x.as_slice()[i]).sum::<f64>() / n;
            assert!((s.moments().mean[i] - m).abs() < 1e-12);
            for j in 0..3 {
                let mj: f64 = draws.iter().map(|x| x.as_slice()[j]).sum::<f64>() / n;
                let c: f64 = draws
                    .iter()
                    .map(|x| (x.as_slice()[i] - m) * (x.as_slice()[j] - mj))
                    .sum::<f64>()
                    / (n - 1.0);
                assert!((s.covariance()[(i, j)] - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_few_draws_rejected() {
        assert!(PosteriorSamples::from_draws(vec![v(&[0.1, 0.2]), v(&[0.3, 0.4])], 1, 0.5).is_err());
        assert!(PosteriorSamples::from_draws(vec![], 1, 0.5).is_err());
    }

    /// Power iteration as an independent oracle for the top eigenpair.
    fn power_iteration(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
        let d = m.nrows();
        let mut x = nalgebra::DVector::from_fn(d, |i, _| 1.0 + i as f64 * 0.1);
        for _ in 0..2000 {
            let y = m * &x;
            x = &y / y.norm();
        }
        let lambda = x.dot(&(m * &x));
        (lambda, x.iter().copied().collect())
    }

    #[test]
    fn principal_axis_matches_power_iteration() {
        let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.2, -0.3, 0.1, 0.5, 0.4, 0.0, 0.3, 0.7]);
        let cov = &a * a.transpose() * 0.01;
        let moments = PosteriorMoments::new(vec![0.5; 3], cov.clone()).unwrap();
        let (lambda, u) = moments.principal_axis();
        let (lambda_ref, u_ref) = power_iteration(&cov);
        assert!((lambda - lambda_ref).abs() < 1e-10 * lambda_ref.max(1.0));
        let dot: f64 = u.iter().zip(&u_ref).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8);
        let pivot = u.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        assert!(pivot > 0.0);
    }

    #[test]
    fn diagonal_axis_and_log_det() {
        let m = PosteriorMoments::new(vec![0.5, 0.5], DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[0.0001, 0.04]))).unwrap();
        let (lambda, u) = m.principal_axis();
        assert!((lambda - 0.04).abs() < 1e-15);
        assert!((u[0].abs()) < 1e-12 && (u[1] - 1.0).abs() < 1e-12);
        assert!((m.log_det_covariance() - (0.0001f64.ln() + 0.04f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn preview_and_json_view() {
        let s = sample_posterior(2, &[], k10(), &McmcConfig::default()).unwrap();
        let p = s.preview(500);
        assert!(p.len() <= 500 && p.len() >= 400);
        assert_eq!(p[1], s.draws()[8]);
        let view = s.to_json_view(10);
        assert_eq!(view.draws.len(), 400);
        assert_eq!(view.total_draws, 4000);
        let text = serde_json::to_string(&view).unwrap();
        let back: PosteriorSamplesJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.draws, view.draws);
    }

    #[test]
    fn csv_has_one_row_per_draw() {
        let cfg = McmcConfig {
            chains: 2,
            keep: 100,
            burn_in: 100,
            ..McmcConfig::default()
        };
        let s = sample_posterior(3, &[], k10(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        s.write_csv(&path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["chain", "draw", "a0", "a1", "a2"]);
        let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 200);
        assert_eq!(&rows[150][0], "1");
        assert_eq!(&rows[150][1], "50");
        assert_eq!(rows[150][2].parse::<f64>().unwrap(), s.draws()[150].as_slice()[0]);
    }

    #[test]
    fn invalid_configs() {
        assert!(sample_posterior(0, &[], k10(), &McmcConfig::default()).is_err());
        let bad = McmcConfig {
            chains: 0,
            ..McmcConfig::default()
        };
        assert!(sample_posterior(2, &[], k10(), &bad).is_err());
        let mismatched = [AnsweredQuery::new(v(&[0.1, 0.2, 0.3]), v(&[0.3, 0.2, 0.1])).unwrap()];
        assert!(sample_posterior(2, &mismatched, k10(), &McmcConfig::default()).is_err());
    }
}
