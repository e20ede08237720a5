use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use squeezeprof::commands::{self, Overrides};
use squeezeprof::config::OrderConfig;
use squeezeprof::{CampaignConfig, CliError, Result, Stage};

#[derive(Parser)]
#[command(name = "squeezeprof", version, about = "Spatial mode profiler for squeezed and thermal light")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Campaign config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Thermal weights taken as V⁻ with no floor or squeezed-leakage removal.
    #[arg(long)]
    paper_exact_thermal: bool,
    /// Thermal image as the plain sum over 0/1 masks.
    #[arg(long = "literal-eq21")]
    literal_eq21: bool,
    /// Keep the shot-noise floor in the thermal weights.
    #[arg(long)]
    no_floor_subtract: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every mask sweep and write trace CSVs plus a manifest.
    Simulate(Common),
    /// Fit a trace directory into fits.csv.
    Fit {
        /// Directory holding manifest.json and the trace CSVs.
        traces: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct images and metrics from a fit table.
    Reconstruct {
        /// fits.csv written by `fit`.
        fits: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// simulate, fit and reconstruct in one go.
    Pipeline(Common),
    /// Write the Hadamard masks, complements and blank as PBM files.
    GenMasks {
        /// Grid size; taken from the config when omitted.
        n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paper_exact_thermal: self.paper_exact_thermal,
            literal_thermal: self.literal_eq21,
            no_floor_subtract: self.no_floor_subtract,
        }
    }

    fn config(&self) -> Result<Option<CampaignConfig>> {
        let Some(path) = &self.config else { return Ok(None) };
        let mut cfg = CampaignConfig::load(path)?;
        self.overrides().apply(&mut cfg);
        Ok(Some(cfg))
    }

    fn required_config(&self) -> Result<CampaignConfig> {
        self.config()?.ok_or_else(|| CliError::Config("--config is required".into()))
    }

    fn out(&self, cfg: Option<&CampaignConfig>) -> Result<PathBuf> {
        match cfg {
            Some(c) => c.output_dir(self.out.as_deref()),
            None => self.out.clone().ok_or_else(|| CliError::Config("--out is required".into())),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.required_config()?;
            let out = common.out(Some(&cfg))?;
            let manifest = commands::simulate(&cfg, &out, common.force)?;
            println!("wrote {} traces to {}", manifest.traces.len(), out.display());
        }
        Command::Fit { traces, common } => {
            let cfg = common.config()?;
            let out = match (&common.out, &cfg) {
                (None, None) => traces.clone(),
                _ => common.out(cfg.as_ref())?,
            };
            let rows = commands::fit(&traces, &out, common.force)?;
            let failed = rows.iter().filter(|r| r.fit.is_err()).count();
            println!("fitted {} traces ({failed} failed) into {}", rows.len(), out.join(squeezeprof::formats::FITS).display());
        }
        Command::Reconstruct { fits, common } => {
            let cfg = common.config()?;
            let out = match (&common.out, &cfg) {
                (None, None) => fits.parent().map(PathBuf::from).unwrap_or_default(),
                _ => common.out(cfg.as_ref())?,
            };
            let options = match &cfg {
                Some(c) => c.reconstruction,
                None => {
                    let mut r = Default::default();
                    common.overrides().apply_reconstruction(&mut r);
                    r
                }
            };
            let m = commands::reconstruct(&fits, cfg.as_ref(), options.options(), &out, common.force)?;
            report(&m);
        }
        Command::Pipeline(common) => {
            let cfg = common.required_config().map_err(|e| e.at(Stage::Config))?;
            let out = common.out(Some(&cfg)).map_err(|e| e.at(Stage::Config))?;
            let m = commands::pipeline(&cfg, &out, common.force)?;
            report(&m);
        }
        Command::GenMasks { n, common } => {
            let cfg = common.config()?;
            let (n, order) = match (n, &cfg) {
                (Some(n), c) => (n, c.as_ref().map_or(OrderConfig::Natural, |c| c.mask_order)),
                (None, Some(c)) => (c.grid, c.mask_order),
                (None, None) => return Err(CliError::Config("give a grid size or --config".into())),
            };
            let out = common.out(cfg.as_ref())?;
            let written = commands::gen_masks(n, order, &out, common.force).map_err(|e| e.at(Stage::GenMasks))?;
            println!("wrote {} masks to {}", written.len(), out.display());
        }
    }
    Ok(())
}

fn report(m: &commands::Metrics) {
    println!("blank noise: min {:.2} dB, max {:.2} dB", m.min_noise_db, m.max_noise_db);
    if !m.squeezing_detected {
        println!("warning: blank minimum is above shot noise, no squeezing detected");
    }
    if m.ambiguous_signs > 0 {
        println!("warning: {} masks had ambiguous signs", m.ambiguous_signs);
    }
    if let Some(f) = m.squeezed_fidelity {
        println!("squeezed fidelity: {f:.6}");
    }
    if let Some(c) = m.thermal_correlation {
        println!("thermal correlation: {c:.6}");
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
