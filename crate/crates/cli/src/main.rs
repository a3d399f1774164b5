//! `simbias`: generate XOR-like data, map the landscape `G`, train networks
//! from small initialization, and check the resulting alignment and margin claims.
//!
//! Every option is also a config-file key (`--per-cluster` ↔ `per_cluster`).
//! Flags override `--config`, which overrides defaults.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use settings::{read_config, Settings};

#[derive(Parser, Debug)]
#[command(name = "simbias", version, about = "Simplicity-bias experiments for two-layer networks", long_about = None)]
struct Cli {
    /// Flat `key = value` config file; a previous run's manifest works too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Log debug detail.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Cmd,
}

/// Declares a flag struct whose fields double as settings keys.
macro_rules! options {
    ($name:ident { $( $(#[$m:meta])* $field:ident ),* $(,)? }) => {
        #[derive(Args, Debug, Default)]
        struct $name {
            $( $(#[$m])* #[arg(long)] $field: Option<String>, )*
        }
        impl $name {
            fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
                vec![$( (stringify!($field), self.$field.clone()) ),*]
            }
        }
    };
}

options!(GenXorOpts {
    /// Input dimension (≥ 2).
    d,
    /// Base points per cluster before symmetry closure.
    per_cluster,
    /// Cluster radius δ.
    delta,
    /// Regularity margin Δ0.
    delta0,
    /// Smoothing radius ξ used for the regularity floor.
    xi,
    seed,
    /// Output CSV.
    #[arg(short = 'o')]
    out,
});

options!(GenSkewOpts {
    /// Angle between positive and negative clusters (e.g. `pi/3`).
    #[arg(alias = "alpha")]
    alpha_rad,
    per_cluster,
    delta,
    seed,
    #[arg(short = 'o')]
    out,
});

options!(LandscapeOpts {
    /// Dataset CSV.
    data,
    /// 0 selects the exact ReLU; otherwise the smoothed ReLU with this ξ.
    xi,
    /// Ascent starts per sign.
    n_starts,
    /// Terminals closer than this angle are merged.
    dedup_rad,
    seed,
    #[arg(short = 'o')]
    out,
});

options!(TrainOpts {
    /// Dataset CSV; if absent a skewed XOR set is generated.
    data,
    #[arg(alias = "alpha")]
    alpha_rad,
    per_cluster,
    delta,
    xi,
    /// Hidden neurons.
    m,
    /// Initialization scale σ.
    sigma,
    /// Per-neuron radius before scaling by σ (default 1/√3).
    init_radius,
    /// Constant learning rate.
    lr,
    epochs,
    log_every,
    /// Number of neurons with per-neuron trajectory columns.
    track,
    n_starts,
    /// Alignment tolerance around each extremum.
    align_tol_rad,
    seed,
    /// Output directory.
    #[arg(short = 'o')]
    out,
});

options!(Train4Opts {
    /// Dataset CSV; if absent a planar XOR set with δ = 0.01 is generated.
    data,
    d,
    per_cluster,
    delta,
    delta0,
    xi,
    /// Four comma-separated second-layer weights, signs +,-,+,-.
    init,
    epochs,
    log_every,
    /// 0 selects the exact ReLU.
    activation_xi,
    seed,
    #[arg(short = 'o')]
    out,
});

options!(CoupleOpts {
    data,
    d,
    per_cluster,
    delta,
    delta0,
    xi,
    activation_xi,
    /// Comma-separated r values in (0, 1).
    r_list,
    kappa_star,
    /// Random neurons besides those parked on coordinate axes.
    m_random,
    /// RK4 step.
    h,
    n_starts,
    seed,
    #[arg(short = 'o')]
    out,
});

options!(MarginOpts {
    data,
    /// Parameter CSV from `train`/`train4`; defaults to the four-neuron θ̆.
    params,
    xi,
    /// Optional text report.
    #[arg(short = 'o')]
    out,
});

options!(ProbeOpts {
    data,
    params,
    xi,
    samples,
    radius,
    /// Also probe the control with this neuron's u doubled.
    control,
    seed,
    #[arg(short = 'o')]
    out,
});

options!(CaptureOpts {
    data,
    d,
    per_cluster,
    delta,
    delta0,
    xi,
    activation_xi,
    /// Comma-separated, strictly increasing neuron counts.
    m_list,
    trials,
    n_starts,
    /// δ + ξ for the reported bound when `--data` is given.
    delta_plus_xi,
    seed,
    #[arg(short = 'o')]
    out,
});

options!(ValidateOpts {
    data,
    xi,
    delta0,
    #[arg(short = 'o')]
    out,
});

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate symmetric XOR-like data.
    GenXor(GenXorOpts),
    /// Generate planar XOR with skewed cluster directions.
    GenSkew(GenSkewOpts),
    /// Find the global extrema of |G| on the sphere.
    Landscape(LandscapeOpts),
    /// Train a wide network by gradient descent and report alignment.
    Train(TrainOpts),
    /// The four-neuron run with the adaptive learning-rate schedule.
    Train4(Train4Opts),
    /// Full vs linearized dynamics over a sweep of r.
    Couple(CoupleOpts),
    /// Normalized margin of a parameter file.
    Margin(MarginOpts),
    /// Random perturbation test of local margin maximality.
    ProbeMargin(ProbeOpts),
    /// Monte-Carlo probability that m neurons capture every extremum.
    CaptureMc(CaptureOpts),
    /// Check a dataset against the XOR assumptions.
    Validate(ValidateOpts),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Override the recorded output location.
        #[arg(short = 'o', long)]
        out: Option<String>,
    },
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::GenXor(_) => "gen-xor",
        Cmd::GenSkew(_) => "gen-skew",
        Cmd::Landscape(_) => "landscape",
        Cmd::Train(_) => "train",
        Cmd::Train4(_) => "train4",
        Cmd::Couple(_) => "couple",
        Cmd::Margin(_) => "margin",
        Cmd::ProbeMargin(_) => "probe-margin",
        Cmd::CaptureMc(_) => "capture-mc",
        Cmd::Validate(_) => "validate",
        Cmd::Replay { .. } => "replay",
    }
}

fn dispatch(name: &str, s: &mut Settings) -> Result<commands::Written> {
    match name {
        "gen-xor" => commands::gen_xor_cmd(s),
        "gen-skew" => commands::gen_skew_cmd(s),
        "landscape" => commands::landscape_cmd(s),
        "train" => commands::train_cmd(s),
        "train4" => commands::train4_cmd(s),
        "couple" => commands::couple_cmd(s),
        "margin" => commands::margin_cmd(s),
        "probe-margin" => commands::probe_cmd(s),
        "capture-mc" => commands::capture_cmd(s),
        "validate" => commands::validate_cmd(s),
        other => bail!("unknown command '{other}'"),
    }
}

fn execute(name: &str, mut s: Settings) -> Result<()> {
    let start = Instant::now();
    let written = dispatch(name, &mut s)?;
    if let Some(path) = written.manifest {
        let text = manifest::render(name, s.resolved(), &written.outputs, start.elapsed().as_secs_f64());
        manifest::write(&path, &text)?;
        log::info!("manifest written to {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut file = match &cli.config {
        Some(p) => read_config(p)?,
        None => Default::default(),
    };
    let recorded = file.remove(manifest::COMMAND_KEY);
    let name = command_name(&cli.command);
    let flags = match &cli.command {
        Cmd::GenXor(o) => o.overrides(),
        Cmd::GenSkew(o) => o.overrides(),
        Cmd::Landscape(o) => o.overrides(),
        Cmd::Train(o) => o.overrides(),
        Cmd::Train4(o) => o.overrides(),
        Cmd::Couple(o) => o.overrides(),
        Cmd::Margin(o) => o.overrides(),
        Cmd::ProbeMargin(o) => o.overrides(),
        Cmd::CaptureMc(o) => o.overrides(),
        Cmd::Validate(o) => o.overrides(),
        Cmd::Replay { manifest, out } => {
            let mut recorded = read_config(manifest)?;
            let cmd = recorded
                .remove(manifest::COMMAND_KEY)
                .with_context(|| format!("{}: no '{}' line", manifest.display(), manifest::COMMAND_KEY))?;
            let mut s = Settings::new(recorded, vec![]);
            if let Some(o) = out {
                s.set("out", o.clone());
            }
            return execute(&cmd, s);
        }
    };
    if let Some(c) = recorded.filter(|c| c != name) {
        bail!("config file was recorded for '{c}', not '{name}'");
    }
    execute(name, Settings::new(file, flags))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "error"
    } else if cli.verbose {
        "debug"
    } else {
        "info"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
