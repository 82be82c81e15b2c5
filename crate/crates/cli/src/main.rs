use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cluster_spt::classical::{
    couplings_from_errors, critical_rate_decoupled, critical_rate_n2, ising_critical_coupling,
};
use cluster_spt::runner::{run, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "cluster-spt", version, about = "Decohered cluster-state SPT experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the classical couplings for a grid of error rates and the critical rates.
    Map(MapArgs),
    /// Run the cross-oracle suite (or the channel symmetry table).
    Oracle {
        /// Run the symmetry table preset instead of the oracle suite.
        #[arg(long)]
        symmetry: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo runs: Binder crossing scans (or figure3 configs).
    Mc(Common),
    /// Diagnostics scan over the p grid.
    Diagnose(Common),
    /// Strange-correlator free-energy excess for square loops.
    Figure3(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Without it the subcommand's preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for job-level parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    /// Bit-flip rates.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.05, 0.1, 0.1782, 0.2, 0.25, 0.2929, 0.35, 0.4, 0.45])]
    p_x: Vec<f64>,
    /// Phase-flip rate.
    #[arg(long, default_value_t = 0.0)]
    p_z: f64,
    /// Take the grids from a config instead.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write map.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn map(args: MapArgs) -> anyhow::Result<()> {
    let (px, pz) = match &args.config {
        Some(path) => {
            let c = ExperimentConfig::load(path)?;
            (c.p_grid, c.p_z_grid)
        }
        None => (args.p_x, vec![args.p_z]),
    };
    let mut rows = vec!["p_x,p_z,J,h,U,t".to_string()];
    for &z in &pz {
        for &x in &px {
            let c = couplings_from_errors(x, z).with_context(|| format!("p_x = {x}, p_z = {z}"))?;
            rows.push(format!(
                "{x:.6},{z:.6},{:.10},{:.10},{:.10},{:.10}",
                c.j, c.h, c.u, c.t
            ));
        }
    }
    for r in &rows {
        println!("{r}");
    }
    println!();
    println!("ising J_c            {:.10}", ising_critical_coupling());
    println!("p_c (n = 2)          {:.10}", critical_rate_n2());
    println!("p_c (decoupled)      {:.10}", critical_rate_decoupled());
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("map.csv"), rows.join("\n") + "\n")?;
    }
    Ok(())
}

fn experiment(common: Common, default: ExperimentKind, allowed: &[ExperimentKind]) -> anyhow::Result<bool> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::preset(default),
    };
    if !allowed.contains(&config.kind) {
        let names: Vec<_> = allowed.iter().map(|k| k.name()).collect();
        bail!(
            "config kind `{}` does not belong to this subcommand (expected {})",
            config.kind.name(),
            names.join(" or ")
        );
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = common.out {
        config.output = Some(out);
    }
    if let Some(n) = common.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let summary = run(&config)?;
    eprintln!("{} -> {}", summary.kind.name(), summary.output.display());
    for f in &summary.files {
        eprintln!("  wrote {}", f.display());
    }
    for f in &summary.failures {
        eprintln!("  FAIL {f}");
    }
    Ok(summary.passed())
}

fn main() -> ExitCode {
    use ExperimentKind::*;
    let result = match Cli::parse().command {
        Command::Map(args) => map(args).map(|_| true),
        Command::Oracle { symmetry, common } => {
            let default = if symmetry { SymmetryTable } else { OracleSuite };
            experiment(common, default, &[OracleSuite, SymmetryTable])
        }
        Command::Mc(common) => experiment(common, CriticalScan, &[CriticalScan, Figure3]),
        Command::Diagnose(common) => experiment(common, DiagnosticsScan, &[DiagnosticsScan]),
        Command::Figure3(common) => experiment(common, Figure3, &[Figure3]),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
