//! Batch simulation of elicitation trials against simulated oracles.
//!
//! Each trial draws a hidden ideal point, runs a session for a fixed number of
//! queries and records metrics after every answer. Trial seeds derive from
//! the master seed and the trial index only, so strategies compared under the
//! same master seed face the same targets, and results do not depend on the
//! order in which trials are scheduled.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribute::{sample_uniform, AttributeVector};
use crate::error::{Error, Result};
use crate::likelihood::NoiseConstant;
use crate::mcmc::McmcConfig;
use crate::metrics::{metric_constraint_satisfaction, metric_mse, metric_percentage_closer};
use crate::oracle::{fit_noise_constant, generate_triplets, OracleConfig, K_MAX, K_MIN};
use crate::seed::derive_seed;
use crate::selection::{SelectionConfig, Strategy};
use crate::session::SessionState;

/// Triplets generated per noise level when calibrating `k_q`.
pub const CALIBRATION_TRIPLETS: usize = 1000;

const TAG_TARGET: u64 = 0;
const TAG_SELECTION: u64 = 1;
const TAG_MCMC: u64 = 2;
const TAG_ORACLE: u64 = 3;
const TAG_CLOSER: u64 = 4;
const TAG_TRIPLETS: u64 = 0x7419;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub trials: usize,
    pub queries_per_trial: usize,
    pub selection: SelectionConfig,
    pub k_q: NoiseConstant,
    pub oracle_noise: f64,
    pub closer_batch: usize,
    pub master_seed: u64,
    pub mcmc: McmcConfig,
    /// Directory receiving `<label>.csv` and `<label>.json`.
    pub output_path: Option<PathBuf>,
    /// File stem for outputs; defaults to the strategy name.
    pub label: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            trials: 20,
            queries_per_trial: 30,
            selection: SelectionConfig::default(),
            k_q: NoiseConstant::default(),
            oracle_noise: 0.0,
            closer_batch: 1000,
            master_seed: 42,
            mcmc: McmcConfig::default(),
            output_path: None,
            label: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.queries_per_trial == 0 {
            return Err(Error::invalid("queries_per_trial must be >= 1"));
        }
        if self.closer_batch == 0 {
            return Err(Error::invalid("closer_batch must be >= 1"));
        }
        if !(self.oracle_noise.is_finite() && self.oracle_noise >= 0.0) {
            return Err(Error::invalid("oracle_noise must be finite and >= 0"));
        }
        self.selection.validate()?;
        self.mcmc.validate()
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        let mut cfg = self.clone();
        cfg.selection.strategy = strategy;
        cfg
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.selection.strategy.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub t: usize,
    pub mse: f64,
    pub pct_closer: f64,
    pub constraint_pct: f64,
    pub log_det_cov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub target: AttributeVector,
    pub final_estimate: AttributeVector,
    pub per_query: Vec<QueryMetrics>,
}

impl TrialRecord {
    pub fn last(&self) -> &QueryMetrics {
        self.per_query.last().expect("trial has at least one query")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation; `NaN` for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub label: String,
    pub strategy: Strategy,
    pub dimension: usize,
    pub queries_per_trial: usize,
    pub k_q: f64,
    pub oracle_noise: f64,
    pub trials: usize,
    pub completed: usize,
    pub failed: usize,
    pub final_mse: Stat,
    pub final_pct_closer: Stat,
    pub final_constraint_pct: Stat,
    pub final_log_det_cov: Stat,
    /// Mean MSE across completed trials after each query.
    pub mse_curve: Vec<f64>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    pub fn final_values(&self, metric: impl Fn(&QueryMetrics) -> f64) -> Vec<f64> {
        self.records.iter().map(|r| metric(r.last())).collect()
    }

    pub fn all_completed(&self) -> bool {
        self.summary.failed == 0
    }
}

fn trial_seed(cfg: &ExperimentConfig, trial_index: usize) -> u64 {
    derive_seed(cfg.master_seed, &[trial_index as u64])
}

/// The hidden ideal point of trial `trial_index`.
pub fn trial_target(cfg: &ExperimentConfig, trial_index: usize) -> Result<AttributeVector> {
    let seed = derive_seed(trial_seed(cfg, trial_index), &[TAG_TARGET]);
    Ok(sample_uniform(cfg.dimension, 1, seed)?.remove(0))
}

/// The session a trial starts from, before any answers.
pub fn trial_session(cfg: &ExperimentConfig, trial_index: usize) -> Result<SessionState> {
    let seed = trial_seed(cfg, trial_index);
    SessionState::new(
        format!("trial-{trial_index}"),
        cfg.dimension,
        cfg.selection.with_seed(derive_seed(seed, &[TAG_SELECTION])),
        cfg.k_q,
        cfg.mcmc.with_seed(derive_seed(seed, &[TAG_MCMC])),
    )
}

pub fn trial_oracle(cfg: &ExperimentConfig, trial_index: usize) -> Result<OracleConfig> {
    let seed = trial_seed(cfg, trial_index);
    OracleConfig::new(
        trial_target(cfg, trial_index)?,
        cfg.oracle_noise,
        derive_seed(seed, &[TAG_ORACLE]),
    )
}

/// Metrics of `session`'s current estimate against trial `trial_index`'s target.
pub fn trial_metrics(cfg: &ExperimentConfig, trial_index: usize, session: &SessionState) -> Result<QueryMetrics> {
    let target = trial_target(cfg, trial_index)?;
    let t = session.n_answered();
    let estimate = session.posterior().mean();
    let closer_seed = derive_seed(trial_seed(cfg, trial_index), &[TAG_CLOSER, t as u64]);
    Ok(QueryMetrics {
        t,
        mse: metric_mse(&estimate, &target)?,
        pct_closer: metric_percentage_closer(&estimate, &target, cfg.closer_batch, closer_seed)?,
        constraint_pct: metric_constraint_satisfaction(&estimate, session.answered())?,
        log_det_cov: session.posterior().moments().log_det_covariance(),
    })
}

pub fn run_trial(cfg: &ExperimentConfig, trial_index: usize) -> Result<TrialRecord> {
    let oracle = trial_oracle(cfg, trial_index)?;
    let mut session = trial_session(cfg, trial_index)?;
    let mut per_query = Vec::with_capacity(cfg.queries_per_trial);
    for _ in 0..cfg.queries_per_trial {
        let choice = session.oracle_choice(&oracle)?;
        session.submit_answer(choice)?;
        per_query.push(trial_metrics(cfg, trial_index, &session)?);
    }
    Ok(TrialRecord {
        trial_index,
        target: oracle.ideal_point,
        final_estimate: session.posterior().mean(),
        per_query,
    })
}

fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord], failures: Vec<TrialFailure>) -> ExperimentSummary {
    let finals = |f: fn(&QueryMetrics) -> f64| -> Stat {
        Stat::of(&records.iter().map(|r| f(r.last())).collect::<Vec<_>>())
    };
    let mse_curve = (0..cfg.queries_per_trial)
        .map(|t| Stat::of(&records.iter().map(|r| r.per_query[t].mse).collect::<Vec<_>>()).mean)
        .collect();
    ExperimentSummary {
        label: cfg.label(),
        strategy: cfg.selection.strategy,
        dimension: cfg.dimension,
        queries_per_trial: cfg.queries_per_trial,
        k_q: cfg.k_q.value(),
        oracle_noise: cfg.oracle_noise,
        trials: cfg.trials,
        completed: records.len(),
        failed: failures.len(),
        final_mse: finals(|m| m.mse),
        final_pct_closer: finals(|m| m.pct_closer),
        final_constraint_pct: finals(|m| m.constraint_pct),
        final_log_det_cov: finals(|m| m.log_det_cov),
        mse_curve,
        failures,
    }
}

/// Runs every trial; failed trials are recorded in the summary, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let outcomes: Vec<(usize, Result<TrialRecord>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| (i, run_trial(cfg, i)))
        .collect();
    let mut records = Vec::with_capacity(cfg.trials);
    let mut failures = Vec::new();
    for (trial_index, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(TrialFailure {
                trial_index,
                error: e.to_string(),
            }),
        }
    }
    let summary = summarize(cfg, &records, failures);
    let result = ExperimentResult { records, summary };
    if let Some(dir) = &cfg.output_path {
        write_outputs(dir, &result)?;
    }
    Ok(result)
}

/// Writes `<label>.csv` (one row per trial and query) and `<label>.json`.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let label = &result.summary.label;
    let csv_path = dir.join(format!("{label}.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&csv_path, io),
        other => Error::invalid(format!("{other:?}")),
    })?;
    w.write_record(["trial", "t", "mse", "pct_closer", "constraint_pct", "log_det_cov"])?;
    for r in &result.records {
        for m in &r.per_query {
            w.write_record(&[
                r.trial_index.to_string(),
                m.t.to_string(),
                m.mse.to_string(),
                m.pct_closer.to_string(),
                m.constraint_pct.to_string(),
                m.log_det_cov.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let json_path = dir.join(format!("{label}.json"));
    let body = serde_json::to_vec_pretty(&result.summary)?;
    std::fs::write(&json_path, body).map_err(|e| Error::io(&json_path, e))
}

/// Runs the same configuration under each strategy.
pub fn run_comparison(base: &ExperimentConfig, strategies: &[Strategy]) -> Result<Vec<ExperimentResult>> {
    strategies
        .iter()
        .map(|&s| {
            let mut cfg = base.with_strategy(s);
            cfg.label = base.label.as_ref().map(|l| format!("{l}_{s}"));
            run_experiment(&cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelSummary {
    pub noise: f64,
    pub k_q: f64,
    pub final_pct_closer: Stat,
    pub final_pct_closer_values: Vec<f64>,
    pub final_mse: Stat,
    pub mean_log_det_cov: f64,
    pub failed: usize,
}

/// For each noise level, fits `k_q` on a fresh triplet set and runs the
/// experiment with the noisy oracle.
pub fn run_noise_sweep(base: &ExperimentConfig, noise_levels: &[f64]) -> Result<Vec<NoiseLevelSummary>> {
    if noise_levels.is_empty() {
        return Err(Error::invalid("noise sweep needs at least one level"));
    }
    if noise_levels.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        return Err(Error::invalid("noise levels must be finite and >= 0"));
    }
    if noise_levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("noise levels must be nondecreasing"));
    }
    noise_levels
        .iter()
        .enumerate()
        .map(|(idx, &noise)| {
            let triplets = generate_triplets(
                noise,
                CALIBRATION_TRIPLETS,
                base.dimension,
                derive_seed(base.master_seed, &[TAG_TRIPLETS, idx as u64]),
            )?;
            let k = fit_noise_constant(&triplets, K_MIN, K_MAX)?;
            let mut cfg = base.clone();
            cfg.oracle_noise = noise;
            cfg.k_q = k;
            cfg.label = Some(format!(
                "{}noise_{noise}",
                base.label.as_ref().map(|l| format!("{l}_")).unwrap_or_default()
            ));
            let result = run_experiment(&cfg)?;
            let pct = result.final_values(|m| m.pct_closer);
            Ok(NoiseLevelSummary {
                noise,
                k_q: k.value(),
                final_pct_closer: Stat::of(&pct),
                final_pct_closer_values: pct,
                final_mse: result.summary.final_mse,
                mean_log_det_cov: result.summary.final_log_det_cov.mean,
                failed: result.summary.failed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(strategy: Strategy) -> ExperimentConfig {
        ExperimentConfig {
            trials: 2,
            queries_per_trial: 3,
            closer_batch: 200,
            ..ExperimentConfig::default().with_strategy(strategy)
        }
    }

    #[test]
    fn stat_of() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).std, 0.0);
        assert!(Stat::of(&[]).mean.is_nan());
    }

    #[test]
    fn minimal_shape() {
        let cfg = ExperimentConfig {
            trials: 1,
            queries_per_trial: 1,
            ..small(Strategy::Random)
        };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].per_query.len(), 1);
        assert_eq!(r.records[0].per_query[0].t, 1);
        assert!(r.all_completed());
    }

    #[test]
    fn trials_are_reproducible_and_independent() {
        let cfg = small(Strategy::BestOfN);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(run_trial(&cfg, 1).unwrap(), a.records[1]);
        let t: Vec<usize> = a.records[0].per_query.iter().map(|m| m.t).collect();
        assert_eq!(t, [1, 2, 3]);
        // Strategies share targets under one master seed.
        let c = run_experiment(&small(Strategy::Random)).unwrap();
        assert_eq!(c.records[0].target, a.records[0].target);
        assert_ne!(c.records[0].final_estimate, a.records[0].final_estimate);
    }

    #[test]
    fn outputs_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            output_path: Some(dir.path().join("out")),
            label: Some("demo".into()),
            ..small(Strategy::ClosedForm)
        };
        let r = run_experiment(&cfg).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("out/demo.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "trial,t,mse,pct_closer,constraint_pct,log_det_cov");
        assert_eq!(lines.len(), 1 + 2 * 3);
        let json: ExperimentSummary =
            serde_json::from_slice(&std::fs::read(dir.path().join("out/demo.json")).unwrap()).unwrap();
        assert_eq!(json, r.summary);
        assert_eq!(json.strategy, Strategy::ClosedForm);
        assert_eq!(json.mse_curve.len(), 3);
    }

    #[test]
    fn unwritable_output_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let cfg = ExperimentConfig {
            output_path: Some(blocker.join("sub")),
            ..small(Strategy::Random)
        };
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("file"), "{err}");
    }

    #[test]
    fn comparison_labels_and_validation() {
        let base = ExperimentConfig {
            label: Some("cmp".into()),
            ..small(Strategy::Random)
        };
        let results = run_comparison(&base, &[Strategy::Random, Strategy::ClosedForm]).unwrap();
        assert_eq!(results[1].summary.label, "cmp_closed_form");

        for bad in [
            ExperimentConfig { trials: 0, ..small(Strategy::Random) },
            ExperimentConfig { queries_per_trial: 0, ..small(Strategy::Random) },
            ExperimentConfig { closer_batch: 0, ..small(Strategy::Random) },
            ExperimentConfig { oracle_noise: -0.1, ..small(Strategy::Random) },
        ] {
            assert!(run_experiment(&bad).is_err());
        }
        assert!(run_noise_sweep(&base, &[]).is_err());
        assert!(run_noise_sweep(&base, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn noiseless_sweep_level_saturates_k() {
        let levels = run_noise_sweep(&small(Strategy::ClosedForm), &[0.0, 0.3]).unwrap();
        assert_eq!(levels[0].k_q, K_MAX);
        assert!(levels[1].k_q < K_MAX);
        assert_eq!(levels[1].final_pct_closer_values.len(), 2);
    }
}
