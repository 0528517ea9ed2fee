use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use prefsearch::experiment::{
    run_comparison, run_experiment, run_noise_sweep, ExperimentConfig, ExperimentResult, NoiseLevelSummary,
};
use prefsearch::{McmcConfig, NoiseConstant, SelectionConfig, Strategy};

/// Simulated preference-elicitation experiments.
#[derive(Debug, Parser)]
#[command(name = "experiment", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one strategy.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "closed_form")]
        strategy: Strategy,
    },
    /// Calibrate k_q and run one experiment per oracle noise level.
    SweepNoise {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "closed_form")]
        strategy: Strategy,
        /// Comma-separated, nondecreasing noise standard deviations.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
    },
    /// Run several strategies against the same targets.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "random,best_of_n,closed_form")]
        strategies: Vec<Strategy>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 30)]
    queries: usize,
    #[arg(long, default_value_t = 10.0)]
    kq: f64,
    /// Standard deviation of the oracle's margin noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for CSV and JSON results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Candidate pool size for best_of_n.
    #[arg(long, default_value_t = 500)]
    n_candidates: usize,
    /// Mean-cut weight in the query utility.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Closed-form half-spacing in posterior standard deviations; widest in-box pair when omitted.
    #[arg(long)]
    spacing: Option<f64>,
    /// Random vectors drawn for the percentage-closer metric.
    #[arg(long, default_value_t = 1000)]
    closer_batch: usize,
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value_t = 4)]
    mcmc_chains: usize,
    #[arg(long, default_value_t = 1000)]
    mcmc_burn_in: usize,
    #[arg(long, default_value_t = 1000)]
    mcmc_keep: usize,
}

impl Common {
    fn config(&self, strategy: Strategy) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig {
            dimension: self.dim,
            trials: self.trials,
            queries_per_trial: self.queries,
            selection: SelectionConfig {
                strategy,
                n_candidates: self.n_candidates,
                lambda: self.lambda,
                spacing_stddevs: self.spacing,
                seed: 0,
            },
            k_q: NoiseConstant::new(self.kq)?,
            oracle_noise: self.noise,
            closer_batch: self.closer_batch,
            master_seed: self.seed,
            mcmc: McmcConfig {
                chains: self.mcmc_chains,
                burn_in: self.mcmc_burn_in,
                keep: self.mcmc_keep,
                ..McmcConfig::default()
            },
            output_path: self.out.clone(),
            label: self.label.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_result(r: &ExperimentResult) {
    let s = &r.summary;
    println!(
        "{:<12} mse {:.3e} ± {:.1e}  pct_closer {:>6.3} ± {:.3}  constraint {:>6.2} ± {:.2}  completed {}/{}",
        s.label,
        s.final_mse.mean,
        s.final_mse.std,
        s.final_pct_closer.mean,
        s.final_pct_closer.std,
        s.final_constraint_pct.mean,
        s.final_constraint_pct.std,
        s.completed,
        s.trials
    );
    for f in &s.failures {
        eprintln!("trial {} failed: {}", f.trial_index, f.error);
    }
}

fn write_json(dir: Option<&Path>, name: &str, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, strategy } => {
            let result = run_experiment(&common.config(strategy)?)?;
            print_result(&result);
            Ok(result.all_completed())
        }
        Command::Compare { common, strategies } => {
            if strategies.is_empty() {
                bail!("--strategies needs at least one strategy");
            }
            let results = run_comparison(&common.config(strategies[0])?, &strategies)?;
            results.iter().for_each(print_result);
            let summaries: Vec<_> = results.iter().map(|r| &r.summary).collect();
            write_json(common.out.as_deref(), "compare.json", &summaries)?;
            Ok(results.iter().all(ExperimentResult::all_completed))
        }
        Command::SweepNoise { common, strategy, levels } => {
            let levels: Vec<NoiseLevelSummary> = run_noise_sweep(&common.config(strategy)?, &levels)?;
            for l in &levels {
                println!(
                    "noise {:<6} k_q {:>9.3}  pct_closer {:>6.3} ± {:.3}  mse {:.3e}  log_det_cov {:>8.3}  failed {}",
                    l.noise, l.k_q, l.final_pct_closer.mean, l.final_pct_closer.std, l.final_mse.mean, l.mean_log_det_cov, l.failed
                );
            }
            write_json(common.out.as_deref(), "sweep.json", &levels)?;
            Ok(levels.iter().all(|l| l.failed == 0))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some trials failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
