use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use berryphase::cli::{self, RunConfig, SweepTable};
use berryphase::sequence::Contour;
use berryphase::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(version, about = "Geometric phases of a driven multi-level transmon")]
struct Args {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    decoherence: Option<Switch>,
    /// Shots per tomography setting (0 = exact expectations).
    #[arg(long, global = true)]
    shots: Option<u32>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    dt_ps: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Charge-basis spectrum and detuning ratios.
    Spectrum,
    /// Phase against solid angle.
    SweepAngle,
    /// Phase against detuning at several solid angles.
    SweepDetuning,
    /// Phase and gate fidelity against sweep time.
    SweepTau,
    /// One contour with its full trajectory.
    Simulate {
        #[arg(long, default_value = "-+", allow_hyphen_values = true)]
        contour: String,
        /// Solid angle in units of π.
        #[arg(long, default_value_t = 0.25)]
        solid_angle_pi: f64,
    },
}

fn resolve(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.decoherence {
        cfg.coherence.enabled = matches!(s, Switch::On);
    }
    if let Some(n) = args.shots {
        cfg.readout.shots = n;
    }
    if let Some(s) = args.seed {
        cfg.readout.seed = s;
    }
    if let Some(dt) = args.dt_ps {
        cfg.numerics.dt_ps = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(args: &Args) -> Result<Box<dyn Write>> {
    Ok(match &args.output {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: &Args) -> Result<()> {
    let cfg = resolve(args)?;
    let table = |t: SweepTable| -> Result<()> {
        let mut out = output(args)?;
        t.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    };
    match &args.command {
        Command::Spectrum => {
            let mut out = output(args)?;
            out.write_all(cli::spectrum_report(&cfg)?.as_bytes())?;
            out.flush()?;
        }
        Command::SweepAngle => table(cli::sweep_angle(&cfg)?)?,
        Command::SweepDetuning => table(cli::sweep_detuning(&cfg)?)?,
        Command::SweepTau => table(cli::sweep_tau(&cfg)?)?,
        Command::Simulate { contour, solid_angle_pi } => {
            let contour: Contour = contour.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
            let mut out = output(args)?;
            let run = cli::simulate(&cfg, contour, solid_angle_pi * std::f64::consts::PI, &mut out)?;
            out.flush()?;
            log::info!("gamma = {:?}, bloch length = {:.4}", run.gamma, run.bloch_length);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
