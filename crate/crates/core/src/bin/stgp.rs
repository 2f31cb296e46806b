use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stgp::model::SiteSet;
use stgp::pipeline::{self, CovCheckStudy, GridData, RunConfig};
use stgp::rng::seeded_rng;
use stgp::simulate::NonlinearBenchmark;
use stgp::Result;

/// Gaussian-process state-space modelling of spatio-temporal data.
#[derive(Parser)]
#[command(name = "stgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a grid from the model at the reference-study parameters.
    Simulate {
        #[arg(long, default_value_t = 15)]
        sites: usize,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Side of the square the sites are drawn in.
        #[arg(long, default_value_t = 2.0)]
        side: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the true parameters as JSON.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Simulate a grid from the nonlinear benchmark dynamics.
    SimulateNonlinear {
        #[arg(long, default_value_t = 20)]
        sites: usize,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 2.0)]
        side: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sampler and write trace.csv and trace.meta.json.
    Fit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Prediction intervals at the configured targets from a fitted trace.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Leave-one-out intervals at every observed cell.
    Loo {
        #[arg(long)]
        config: PathBuf,
        /// Refit a chain per cell instead of conditioning on the others.
        #[arg(long)]
        refit: bool,
    },
    /// Prediction intervals at every missing cell from a fitted trace.
    Impute {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the geometric covariance approximation with simulation.
    Covcheck {
        #[arg(long, default_value_t = 20_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior summaries, acceptance rates and PSR of one or more traces.
    Diagnose {
        /// Directories holding trace.csv and trace.meta.json.
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            sites,
            steps,
            side,
            seed,
            out,
            params_out,
        } => {
            let (data, params) = pipeline::simulate_reference(sites, steps, side, seed)?;
            pipeline::write_grid(&out, &data)?;
            if let Some(p) = params_out {
                std::fs::write(p, serde_json::to_string_pretty(&params)? + "\n")?;
            }
            println!("wrote {} sites x {} steps to {}", sites, steps, out.display());
        }
        Command::SimulateNonlinear {
            sites,
            steps,
            side,
            seed,
            out,
        } => {
            let mut rng = seeded_rng(seed, 0);
            let s = SiteSet::random_in_square(sites, side, &mut rng)?;
            let (latent, grid) = NonlinearBenchmark::default().simulate_with_rng(&s, steps, &mut rng)?;
            pipeline::write_grid(
                &out,
                &GridData {
                    sites: s,
                    grid,
                    latent: Some(latent),
                },
            )?;
            println!("wrote {} sites x {} steps to {}", sites, steps, out.display());
        }
        Command::Fit { config } => {
            let cfg = RunConfig::load(&config)?;
            let traces = pipeline::fit(&cfg)?;
            for (k, t) in traces.iter().enumerate() {
                let lat = t.acceptance.latent().rate().unwrap_or(f64::NAN);
                println!(
                    "chain {k}: {} samples, latent acceptance {lat:.3}, written to {}",
                    t.len(),
                    cfg.chain_dir(k).display()
                );
            }
        }
        Command::Predict { config } => {
            let cfg = RunConfig::load(&config)?;
            let rows = pipeline::predict(&cfg)?;
            println!("{} targets written to {}", rows.len(), cfg.output_dir.join("predictions.csv").display());
        }
        Command::Loo { config, refit } => {
            let cfg = RunConfig::load(&config)?;
            let r = pipeline::loo(&cfg, refit)?;
            println!(
                "{}/{} observed cells inside their {}% intervals (coverage {:.3}), mean length {:.3}",
                r.hits,
                r.total,
                cfg.level * 100.0,
                r.coverage(),
                r.mean_interval_length
            );
        }
        Command::Impute { config } => {
            let cfg = RunConfig::load(&config)?;
            let rows = pipeline::impute(&cfg)?;
            println!("{} missing cells written to {}", rows.len(), cfg.output_dir.join("imputed.csv").display());
        }
        Command::Covcheck { replicates, seed, out } => {
            let study = CovCheckStudy {
                replicates,
                ..Default::default()
            };
            let rows = pipeline::covcheck(&study, seed)?;
            pipeline::write_covcheck(&out, &rows)?;
            for r in &rows {
                println!(
                    "t={} t*={}: formula {:.4}, simulated {:.4} (se {:.4})",
                    r.t, r.tstar, r.formula, r.mc_estimate, r.mc_se
                );
            }
        }
        Command::Diagnose { traces, level, out } => {
            let rep = pipeline::diagnose(&traces, level, out.as_deref())?;
            println!("{:<12} {:>10} {:>10} {:>10} {:>8}", "parameter", "median", "lower", "upper", "psr");
            for (s, (_, psr)) in rep.summaries.iter().zip(&rep.psr) {
                let psr = psr.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!("{:<12} {:>10.4} {:>10.4} {:>10.4} {:>8}", s.name, s.median, s.lower, s.upper, psr);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
