//! Thin CLI over the experiment drivers. Exit code 0 iff all assertions of
//! the selected experiment pass.

use clap::{Parser, Subcommand};
use hexflux::config::RunConfig;
use hexflux::error::Result;
use hexflux::experiments;
use hexflux::report::{fnum, Csv};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "hexflux",
    about = "Entropy-stable h/p-nonconforming spectral-element flow solver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configured problem; emit time-series and summary CSVs.
    Run { config: PathBuf },
    /// Nested-refinement convergence study against the exact solution.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Entropy-conservation audit (requires dissipation off).
    EntropyTest {
        config: PathBuf,
        /// Bound on max |dS/dt| over the run.
        #[arg(long, default_value_t = 1e-11)]
        threshold: f64,
    },
    /// Free-stream preservation residuals (optimized vs. analytic metrics).
    Freestream { config: PathBuf },
    /// Per-degree SBP/interpolation residual table.
    VerifyOperators {
        #[arg(long, default_value_t = 13)]
        pmax: usize,
    },
    /// Per-element GCL residual and constraint-spectrum diagnostics.
    MetricsReport { config: PathBuf },
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    match &cfg.output {
        Some(dir) => Path::new(dir).join(name),
        None => PathBuf::from(name),
    }
}

fn emit(cfg: &RunConfig, name: &str, csv: &Csv) -> Result<()> {
    let path = out_path(cfg, name);
    csv.write(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let out = experiments::run(&cfg)?;
            emit(&cfg, "timeseries.csv", &out.series)?;
            let mut summary = Csv::new(&[
                "t_final",
                "steps",
                "rejected",
                "rhs_evals",
                "entropy_initial",
                "entropy_final",
                "max_abs_entropy_rate",
                "mass_change",
            ]);
            summary.row(vec![
                fnum(out.t_final),
                out.stats.steps.to_string(),
                out.stats.rejected.to_string(),
                out.stats.rhs_evals.to_string(),
                fnum(out.entropy0),
                fnum(out.entropy_final),
                fnum(out.max_abs_entropy_rate),
                fnum(out.conserved_final[0] - out.conserved0[0]),
            ]);
            emit(&cfg, "summary.csv", &summary)?;
            if let Some(norms) = out.norms {
                let mut ncsv = Csv::new(&["component", "l1", "l2", "linf"]);
                for (c, name) in ["rho", "rhou", "rhov", "rhow", "E"].iter().enumerate() {
                    ncsv.row(vec![
                        name.to_string(),
                        fnum(norms[c][0]),
                        fnum(norms[c][1]),
                        fnum(norms[c][2]),
                    ]);
                }
                emit(&cfg, "norms.csv", &ncsv)?;
            }
            println!(
                "t = {:.6}, steps = {}, entropy drift = {:.3e}",
                out.t_final,
                out.stats.steps,
                out.entropy_final - out.entropy0
            );
            Ok(true)
        }
        Command::Converge { config, levels } => {
            let cfg = RunConfig::from_path(&config)?;
            let rep = experiments::converge(&cfg, levels)?;
            emit(&cfg, "convergence.csv", &rep.to_csv())?;
            for (k, r) in rep.rates.iter().enumerate() {
                println!(
                    "levels {}->{}: L1 rate {:.3}, L2 rate {:.3}, Linf rate {:.3}",
                    k,
                    k + 1,
                    r[0],
                    r[1],
                    r[2]
                );
            }
            Ok(true)
        }
        Command::EntropyTest { config, threshold } => {
            let cfg = RunConfig::from_path(&config)?;
            let rep = experiments::entropy_test(&cfg)?;
            emit(&cfg, "entropy.csv", &rep.outcome.series)?;
            println!(
                "max |dS/dt| = {:.3e}, normalized entropy drift = {:.3e}",
                rep.outcome.max_abs_entropy_rate, rep.normalized_drift
            );
            let pass = rep.outcome.max_abs_entropy_rate <= threshold;
            println!(
                "entropy conservation: {}",
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(pass)
        }
        Command::Freestream { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let rep = experiments::freestream(&cfg)?;
            println!(
                "rhs residual: optimized metrics {:.3e}, analytic metrics {:.3e}",
                rep.residual_optimized, rep.residual_analytic
            );
            println!(
                "relative to convective rate {:.3e}: optimized {:.3e}, analytic {:.3e}",
                rep.residual_scale,
                rep.relative_optimized(),
                rep.relative_analytic()
            );
            println!(
                "max GCL residual: optimized {:.3e}, analytic {:.3e}",
                rep.max_gcl_optimized, rep.max_gcl_analytic
            );
            let pass = rep.relative_optimized() <= 1e-12;
            println!(
                "free-stream preservation: {}",
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(pass)
        }
        Command::VerifyOperators { pmax } => {
            let csv = experiments::verify_operators(pmax)?;
            print!("{}", csv.to_string());
            let pass = csv.rows.iter().all(|r| {
                let acc: f64 = r[1].parse().unwrap();
                let sbp: f64 = r[2].parse().unwrap();
                let minw: f64 = r[3].parse().unwrap();
                acc <= 1e-12 && sbp <= 1e-14 && minw > 0.0
            });
            println!("operator suite: {}", if pass { "PASS" } else { "FAIL" });
            Ok(pass)
        }
        Command::MetricsReport { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let csv = experiments::metrics_report(&cfg)?;
            emit(&cfg, "metrics.csv", &csv)?;
            let worst = csv
                .rows
                .iter()
                .map(|r| r[3].parse::<f64>().unwrap())
                .fold(0.0_f64, f64::max);
            println!("worst element GCL residual: {worst:.3e}");
            Ok(true)
        }
    }
}
