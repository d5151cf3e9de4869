mod config;
mod fit;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{Analysis, Resolved, RunConfig};
use output::RunDir;

/// Photonic-crystal cavity simulation and emitter spectroscopy analysis.
#[derive(Parser)]
#[command(name = "phc", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PHC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output root; the run goes to `<out>/<run-id>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid cell size in nm, overriding the config.
    #[arg(long)]
    resolution: Option<f64>,
    /// Collection numerical aperture, overriding the config.
    #[arg(long)]
    na: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses listed in the config.
    Simulate(RunArgs),
    /// Grid sweep over lattice constant and hole radius.
    Sweep(RunArgs),
    /// Mode search plus the profile of the selected mode.
    Modes(RunArgs),
    /// Emission far field and collection efficiency.
    Farfield(RunArgs),
    /// Purcell factor at the configured (or best) emitter site.
    Purcell(RunArgs),
    /// Composite ZPL + Fano fit of a spectrum, optionally with an
    /// enhancement estimate against an uncoupled reference.
    FitSpectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        zpl_nm: f64,
        #[arg(long)]
        cavity_nm: f64,
        /// Uncoupled spectrum of the same emitter.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Band for the enhancement estimate.
        #[arg(long, num_args = 2, value_names = ["LO_NM", "HI_NM"])]
        band: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        detection_ratio: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Saturation fit of a power series.
    FitSaturation {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        fix_a_zero: bool,
        /// Background-free curve fixing the saturation power.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Background-corrected g2 from two timestamp files.
    G2 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        bin_ns: f64,
        #[arg(long, default_value_t = 100.0)]
        window_ns: f64,
        /// Signal-to-total ratio.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        signal_rate: Option<f64>,
        #[arg(long)]
        background_rate: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(value_parser = ["spectrum", "saturation", "g2"])]
        kind: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
}

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: fit did not converge");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn resolve(args: &RunArgs, command: &str, extra: &[Analysis]) -> Result<(Resolved, PathBuf)> {
    let (cfg, base) = RunConfig::load(&args.config)?;
    let mut r = cfg.resolve(command, &base)?;
    r.require(extra);
    if let Some(s) = args.seed {
        r.seed = s;
    }
    if let Some(c) = args.resolution {
        r.simulation.cell_nm = c;
    }
    if let Some(na) = args.na {
        r.farfield.na = na;
    }
    r.validate().with_context(|| format!("in {}", args.config.display()))?;
    let out = match (&args.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("out"),
    };
    Ok((r, out))
}

fn run_command(args: &RunArgs, command: &str, extra: &[Analysis]) -> Result<bool> {
    let (r, out) = resolve(args, command, extra)?;
    let run_id = r.run_id()?;
    let config = serde_json::to_value(&r)?;
    let mut dir = RunDir::create(run::run_root(&out, &run_id))?;
    dir.write_json("config.json", &r)?;
    if command == "sweep" {
        let report = run::sweep_into(&r, &mut dir)?;
        print!("{}", run::sweep_csv(&report.rows));
        match report.best {
            Some(i) => println!("best: row {i}"),
            None => println!("best: none within tolerance"),
        }
    } else {
        let s = run::simulate_into(&r, &mut dir)?;
        print_modes(&s.modes);
    }
    let path = dir.finish(command, &run_id, &config)?;
    println!("run {run_id}: {}", path.display());
    Ok(true)
}

fn print_modes(m: &run::ModesReport) {
    println!("{} resonance(s)", m.resonances.len());
    for c in &m.resonances {
        println!("  {:.3} nm  Q {:.1}", c.wavelength_nm, c.q);
    }
    if let Some(s) = &m.selected {
        println!(
            "selected: {:.3} nm, Q {:.1}, V {:.4} (lambda/n)^3, localization {:.3}",
            s.mode.wavelength_nm, s.mode.q, s.mode.volume_cubic_wavelengths, s.localization
        );
    }
}

fn report_fit(o: fit::FitOutcome) -> bool {
    print!("{}", o.summary);
    println!("report: {}", o.dir.display());
    o.converged
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Simulate(a) => run_command(&a, "simulate", &[]),
        Command::Sweep(a) => run_command(&a, "sweep", &[]),
        Command::Modes(a) => run_command(&a, "modes", &[Analysis::Profile]),
        Command::Farfield(a) => run_command(&a, "farfield", &[Analysis::Farfield]),
        Command::Purcell(a) => run_command(&a, "purcell", &[Analysis::Purcell]),
        Command::FitSpectrum {
            input,
            zpl_nm,
            cavity_nm,
            reference,
            band,
            detection_ratio,
            out,
        } => {
            let args = fit::SpectrumArgs {
                input,
                zpl_nm,
                cavity_nm,
                reference,
                band_nm: band.map(|b| (b[0], b[1])),
                detection_ratio,
            };
            Ok(report_fit(fit::fit_spectrum(&args, &out)?))
        }
        Command::FitSaturation {
            input,
            fix_a_zero,
            reference,
            out,
        } => {
            let args = fit::SaturationArgs {
                input,
                fix_a_zero,
                reference,
            };
            Ok(report_fit(fit::fit_saturation_cmd(&args, &out)?))
        }
        Command::G2 {
            a,
            b,
            bin_ns,
            window_ns,
            rho,
            signal_rate,
            background_rate,
            out,
        } => {
            let args = fit::G2Args {
                a,
                b,
                bin_ns,
                window_ns,
                rho,
                signal_rate,
                background_rate,
            };
            Ok(report_fit(fit::g2_cmd(&args, &out)?))
        }
        Command::Synth { kind, seed, dir } => {
            for f in fit::synth(&kind, seed, Path::new(&dir))? {
                println!("{}", f.display());
            }
            Ok(true)
        }
    }
}
