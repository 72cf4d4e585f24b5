use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmcsim_cli::commands::{self, Context, Outcome, TopologyChoice};
use gmcsim_cli::config::{self, RunConfig};
use gmcsim_cli::output::resolve_out_dir;
use gmcsim_cli::{CliError, CliResult};

/// Behavioral experiments on Gm-C dynamic amplifiers.
#[derive(Debug, Parser)]
#[command(name = "gmcsim", version)]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and GMCSIM_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = TopologyChoice::Both)]
    topology: TopologyChoice,
    /// Reject unknown config keys and fail on output clipping.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads for grid evaluation (outputs do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// DC transfer sweep: `transfer_<topology>.csv` (vin_v,vout_v,gain) and a JSON twin.
    Transfer,
    /// Gain at the nominal operating point.
    Gain,
    /// Coherent-sine THD: `spectrum_<topology>.csv` and `thd_summary.json`.
    Thd,
    /// Temperature x supply grid: `corners_<topology>.csv` and `corners_stats.json`.
    Corners,
    /// Re-tune R1 / the window to a target gain and write `calibrated_config.json`.
    Calibrate {
        /// Target gain; defaults to the config's calibration target.
        #[arg(long)]
        target: Option<f64>,
        /// Re-optimize the proposed pair's asymmetry for flat gain first.
        #[arg(long)]
        flatten: bool,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("`--workers`: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => {
            let loaded = config::load(path, cli.strict)?;
            for key in &loaded.unknown_keys {
                eprintln!("warning: ignoring unknown config key `{key}`");
            }
            loaded.config
        }
        None => RunConfig::default(),
    };
    let out_dir = resolve_out_dir(cli.out.as_deref(), config.output_dir.as_deref());
    let ctx = Context::new(config, cli.topology, cli.strict);
    let outcome: Outcome = match cli.command {
        Command::Transfer => commands::transfer(&ctx)?,
        Command::Gain => commands::gain(&ctx)?,
        Command::Thd => commands::thd(&ctx)?,
        Command::Corners => commands::corners(&ctx)?,
        Command::Calibrate { target, flatten } => commands::calibrate(&ctx, target, flatten)?,
        Command::Selftest => commands::selftest(&ctx)?,
    };
    // a closed stdout (e.g. piped into `head`) must not abort the run
    let mut stdout = std::io::stdout().lock();
    for line in &outcome.messages {
        let _ = writeln!(stdout, "{line}");
    }
    for path in outcome.files.commit(&out_dir)? {
        let _ = writeln!(stdout, "wrote {}", path.display());
    }
    match outcome.failure {
        Some(msg) => Err(CliError::Runtime(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
