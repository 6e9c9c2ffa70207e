use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvlab::cli::{run, ExperimentKind, RunConfig};
use mvlab::presets::list_presets;

#[derive(Parser)]
#[command(name = "mvlab", version, about = "Experiments for McKean-Vlasov SDEs with distribution-dependent noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Particle simulation, compared against the closed form when available.
    Simulate(RunArgs),
    /// Small-time scaling of the inverse Gramian.
    Gramian(RunArgs),
    /// Coupling by change of measure: martingale and exact-hit checks.
    Coupling(RunArgs),
    /// Bismut estimator of the intrinsic derivative against finite differences.
    Bismut(RunArgs),
    /// Entropy-cost estimates along a time grid.
    Harnack(RunArgs),
    /// Dissipativity certificate and exponential decay rates.
    Ergodicity(RunArgs),
    /// Print the built-in presets.
    ListPresets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
}

fn build_config(kind: ExperimentKind, a: RunArgs) -> mvlab::Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(mvlab::Error::ConfigInvalid {
                field: "kind".into(),
                reason: format!("config is for {} but subcommand is {}", k.name(), kind.name()),
            });
        }
    }
    cfg.kind = Some(kind);
    if let Some(v) = a.preset {
        cfg.preset = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = a.t0 {
        cfg.t0 = v;
    }
    if let Some(v) = a.h {
        cfg.h = v;
    }
    if let Some(v) = a.particles {
        cfg.particles = v;
    }
    if let Some(v) = a.replicas {
        cfg.replicas = v;
    }
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::ListPresets => {
            for p in list_presets() {
                let params: Vec<String> = p.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{}  dim={} noise_dim={} lambda={}  {}", p.name, p.dim, p.noise_dim, p.lambda, p.description);
                println!("    params: {}", params.join(" "));
            }
            return ExitCode::SUCCESS;
        }
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Gramian(a) => (ExperimentKind::Gramian, a),
        Command::Coupling(a) => (ExperimentKind::Coupling, a),
        Command::Bismut(a) => (ExperimentKind::Bismut, a),
        Command::Harnack(a) => (ExperimentKind::Harnack, a),
        Command::Ergodicity(a) => (ExperimentKind::Ergodicity, a),
    };
    let result = build_config(kind, args).and_then(|cfg| run(&cfg));
    match result {
        Ok(art) => {
            for c in &art.manifest.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for w in &art.manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {}", art.csv_path.display());
            println!("wrote {}", art.manifest_path.display());
            if art.manifest.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
