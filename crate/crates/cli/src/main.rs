use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtlab_cli::config::ExperimentConfig;
use mtlab_cli::emit::write_outputs;
use mtlab_cli::suite::{self, Outcome, Preset};

#[derive(Parser)]
#[command(
    name = "mtlab",
    version,
    about = "Numerical checks of exponential integrability bounds for orthonormal families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dirichlet eigenvalues of a domain
    Eigs(Common),
    /// Weyl-law ratios; CSV columns N, ratio1, ratio2
    Weyl(Common),
    /// Constraint and Hoffmann-Ostenhof checks of a family
    Family(Common),
    /// Point and log bounds for the exponential functional
    #[command(name = "mt-verify")]
    MtVerify(Common),
    /// Momentum-cutoff density bounds and density CSV
    Cutoff(Common),
    /// Layer-cake identity, lower bound and Bessel spot check
    Rumin(Common),
    /// Spectral gap and resolvent checks for -Δ - V
    Schrodinger(Common),
    /// Half-Laplacian checks on the unit interval (m = 1/h)
    Fractional(Common),
    /// Preset suite (desk or quick)
    Suite(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key = value file applied before the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    pad: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
    /// zero | const:c | bump:c | checker:c (c in units of λ₁) | file:PATH
    #[arg(long = "V")]
    potential: Option<String>,
    /// comma-separated ε values for the resolvent fit
    #[arg(long = "eps-grid")]
    eps_grid: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

fn build_config(name: &str, c: &Common) -> mtlab_core::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.command = name.to_string();
    let pairs: Vec<(&str, Option<String>)> = vec![
        ("domain", c.domain.clone()),
        ("h", c.h.map(|v| format!("{v:?}"))),
        ("padding", c.pad.map(|v| v.to_string())),
        ("N", c.n.map(|v| v.to_string())),
        ("source", c.source.clone()),
        ("alpha", c.alpha.map(|v| format!("{v:?}"))),
        ("epsilon", c.eps.map(|v| format!("{v:?}"))),
        ("delta", c.delta.map(|v| format!("{v:?}"))),
        ("ell", c.ell.map(|v| format!("{v:?}"))),
        ("potential", c.potential.clone()),
        ("eps_grid", c.eps_grid.clone()),
        ("q", c.q.map(|v| format!("{v:?}"))),
        ("seed", c.seed.map(|v| v.to_string())),
        ("out", c.out.as_ref().map(|p| p.display().to_string())),
        ("preset", c.preset.clone()),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if name == "suite" && cfg.preset == "none" {
        cfg.preset = "desk".into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(name: &str, cfg: &ExperimentConfig) -> mtlab_core::Result<Outcome> {
    match name {
        "eigs" => suite::run_eigs(cfg),
        "weyl" => suite::run_weyl(cfg),
        "family" => suite::run_family(cfg),
        "mt-verify" => suite::run_mt(cfg),
        "cutoff" => suite::run_cutoff(cfg),
        "rumin" => suite::run_rumin(cfg),
        "schrodinger" => suite::run_schrodinger(cfg),
        "fractional" => suite::run_fractional(cfg),
        _ => suite::run_preset(&Preset::named(&cfg.preset)?, cfg.seed),
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("MTLAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    init_threads();
    let (name, common) = match &cli.command {
        Command::Eigs(c) => ("eigs", c),
        Command::Weyl(c) => ("weyl", c),
        Command::Family(c) => ("family", c),
        Command::MtVerify(c) => ("mt-verify", c),
        Command::Cutoff(c) => ("cutoff", c),
        Command::Rumin(c) => ("rumin", c),
        Command::Schrodinger(c) => ("schrodinger", c),
        Command::Fractional(c) => ("fractional", c),
        Command::Suite(c) => ("suite", c),
    };
    let result = build_config(name, common).and_then(|cfg| {
        let o = run(name, &cfg)?;
        write_outputs(&cfg.out, name, &cfg.to_text(), &o.reports, &o.tables)?;
        Ok(o)
    });
    match result {
        Ok(o) => {
            for r in &o.reports {
                println!("{:<28} {}", r.check, r.status.as_str());
            }
            if o.has_failure() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
