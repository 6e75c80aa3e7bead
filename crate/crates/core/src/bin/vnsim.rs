use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vnsim::config::SimConfig;
use vnsim::profiles::{initial_norm, validate_membership};
use vnsim::runner::{self, Summary, SWEEP_COLUMNS};
use vnsim::{Error, Result};

#[derive(Parser)]
#[command(name = "vnsim", about = "Vlasov-Nordstrom particle-in-cell runs and decay diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to t_end.
    Run { config: PathBuf },
    /// Run the scenario once per amplitude multiplier.
    Sweep {
        config: PathBuf,
        /// Comma-separated list of delta values.
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,
    },
    /// Continue a run from its checkpoint file.
    Resume { checkpoint: PathBuf },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vnsim::error::ConfigError::global(format!("{}: {e}", path.display()))))?;
    SimConfig::parse(&text)
}

fn report(s: &Summary) {
    println!("config_hash {}", s.config_hash);
    println!("t_end {} after {} steps, {} particles", s.t_end, s.steps, s.particles);
    for (name, fit) in &s.fits {
        match (&fit.fit, &fit.error) {
            (Some(f), _) => println!("fit {name}: slope {:.4} +- {:.4} over [{}, {}]", f.slope, f.slope_stderr, f.window.0, f.window.1),
            (None, Some(e)) => println!("fit {name}: {e}"),
            _ => {}
        }
    }
    println!(
        "fsc beta={} eta={:.3e} satisfied={} worst K margin {:.3} worst L margin {:.3}",
        s.fsc.beta, s.eta, s.fsc.satisfied, s.fsc.worst_k, s.fsc.worst_l
    );
    println!("max |p| {:.6} (bound 2R ok: {})", s.max_momentum_support, s.momentum_support_ok);
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let s = runner::run_scenario(&cfg)?;
            report(&s);
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Sweep { config, delta } => {
            let cfg = load(&config)?;
            let table = runner::sweep(&cfg, &delta)?;
            println!("{SWEEP_COLUMNS}");
            for row in table {
                println!("{}", row.csv_line());
            }
        }
        Command::Resume { checkpoint } => {
            let s = runner::resume(&checkpoint)?;
            report(&s);
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let data = cfg.initial_data()?;
            let membership = validate_membership(&data);
            let spacing = [data.f_in.radius, data.phi0_in.radius, data.phi1_in.radius]
                .into_iter()
                .fold(cfg.radius, f64::min)
                / 16.0;
            let norm = initial_norm(&data, spacing)?;
            println!("config ok, hash {}", cfg.hash());
            println!("steps {} estimated memory {:.0} MB", cfg.steps(), cfg.memory_estimate_mb());
            println!("initial norm {:.6e} (+- {:.1e})", norm.total, norm.tolerance);
            if membership.passed() {
                println!("initial data in the admissible class");
            } else {
                println!("initial data outside the admissible class: {}", membership.failures().join(", "));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
