use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use powerscreen::pipeline::{ingest, run_pipeline, Context, PipelineConfig};
use powerscreen::synthetic::{generate_market, write_synthetic, SynthConfig};
use powerscreen::Error;

/// Screen hourly unit dispatch for capacity withholding and push-in.
#[derive(Parser)]
#[command(name = "powerscreen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the inputs.
    Ingest(RunArgs),
    /// Monte Carlo dispatch benchmark and deviation panel.
    Dispatch(RunArgs),
    /// Fuel regimes, supply-curve fits and hourly slopes.
    Slope(RunArgs),
    /// Net exposure, margins and net profits (needs slopes.csv).
    Incentives(RunArgs),
    /// Regime logits, subgroups, block fits and hedge sensitivity.
    Fit(RunArgs),
    /// Quantiles, binned curves and expected impact.
    Report(RunArgs),
    /// Write a synthetic market with known ground truth.
    Synth(SynthArgs),
    /// Every stage in order.
    Pipeline(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    hedge_rate: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML overrides of the default synthetic market.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    hedge_rate: Option<f64>,
    #[arg(long, default_value = "synthetic")]
    out: PathBuf,
}

const VALIDATION: u8 = 1;
const STAGE: u8 = 2;
const DIAGNOSTIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        VALIDATION
    } else if e.is_diagnostic() {
        DIAGNOSTIC
    } else {
        STAGE
    }
}

fn report_error(e: &Error) {
    // Every layer's message already includes its cause.
    eprintln!("error: {e}");
}

fn load_config(args: &RunArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if let Some(r) = args.hedge_rate {
        cfg.hedge_rate = r;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare(cfg: &PipelineConfig) -> Result<Context, Error> {
    let ctx = ingest(cfg)?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| {
        Error::Io {
            path: dir.clone(),
            source: e,
        }
        .in_stage("ingest")
    })?;
    Ok(ctx)
}

/// Runs one stage; `Ok(true)` means it finished with estimation diagnostics.
fn stage(name: &str, cfg: &PipelineConfig) -> Result<bool, Error> {
    let ctx = prepare(cfg)?;
    let wrap = |stage: &'static str| move |e: Error| e.in_stage(stage);
    match name {
        "ingest" => {
            ctx.write_ingest()?;
            let s = ctx.summary();
            println!(
                "{} hours from {}, {} units ({} modeled), {} eligible unit-hours",
                s.hours, s.start, s.units, s.modeled_units, s.eligible_unit_hours
            );
        }
        "dispatch" => {
            let panel = ctx.dispatch()?;
            ctx.write_dispatch(&panel).map_err(wrap("dispatch"))?;
            println!("{}", panel.counts());
        }
        "slope" => {
            let (curve, delta) = ctx.slope()?;
            ctx.write_slope(&curve, &delta).map_err(wrap("slope"))?;
            println!(
                "{} fuel regimes, explained variance {:.4}",
                curve.segmentation.regime_count(),
                curve.segmentation.explained_variance
            );
        }
        "incentives" => {
            let delta = ctx.load_slopes().map_err(wrap("incentives"))?;
            let panel = ctx.incentives(&delta, cfg.hedge_rate)?;
            ctx.write_incentives(&panel).map_err(wrap("incentives"))?;
            println!("{} unit-hours", panel.rows.len());
        }
        "fit" => {
            let load = || Ok::<_, Error>((ctx.load_dispatch()?, ctx.load_incentives()?, ctx.load_slopes()?));
            let (dispatch, incentives, delta) = load().map_err(wrap("fit"))?;
            let fits = ctx.fit(&dispatch, &incentives, &delta)?;
            ctx.write_fits(&fits).map_err(wrap("fit"))?;
            print_fits(&fits.fits);
            return Ok(!fits.fits.diagnostics().is_empty());
        }
        "report" => {
            let load = || Ok::<_, Error>((ctx.load_dispatch()?, ctx.load_incentives()?, ctx.load_fits()?));
            let (dispatch, incentives, fits) = load().map_err(wrap("report"))?;
            let report = ctx.report(&dispatch, &incentives, &fits)?;
            ctx.write_report(&report).map_err(wrap("report"))?;
            println!("report written to {}", cfg.out_dir.display());
        }
        _ => unreachable!("unknown stage {name}"),
    }
    Ok(false)
}

fn print_fits(fits: &powerscreen::pipeline::FitsFile) {
    for m in fits.models.iter().filter(|m| m.model == "main") {
        println!(
            "{:?}: beta0 {:.4} beta1 {:.6}{} (se {:.6}), n {}, R2 {:.4}",
            m.regime, m.beta0, m.beta1, m.stars, m.se1, m.n, m.mcfadden_r2
        );
    }
    for d in fits.diagnostics() {
        println!("diagnostic: {d}");
    }
}

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.hedge_rate {
        cfg.hedge_rate = r;
    }
    let run = || -> Result<(), Error> {
        let market = generate_market(&cfg)?;
        write_synthetic(&args.out, &market)?;
        write_pipeline_config(&args.out, &cfg)?;
        let t = &market.truth;
        println!(
            "{} units over {} hours: {} withheld and {} pushed-in unit-hours",
            cfg.n_units, cfg.hours, t.withheld_hours, t.pushed_in_hours
        );
        Ok(())
    };
    let jobs = PipelineConfig {
        jobs: args.jobs.unwrap_or(0),
        ..PipelineConfig::default()
    };
    jobs.install(run)?
}

/// A pipeline config next to the synthetic inputs, so `pipeline --config`
/// runs on them directly.
fn write_pipeline_config(dir: &Path, synth: &SynthConfig) -> Result<(), Error> {
    let text = format!(
        "market = \"market.csv\"\nunits = \"units.csv\"\ngeneration = \"generation.csv\"\n\
         outages = \"outages.csv\"\nout_dir = \"out\"\nseed = {}\nhedge_rate = {:?}\ntimezone = {:?}\n",
        synth.seed, synth.hedge_rate, synth.timezone
    );
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Synth(a) => {
            return match synth(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    report_error(&e);
                    ExitCode::from(exit_code(&e))
                }
            };
        }
        Command::Ingest(a) => ("ingest", a),
        Command::Dispatch(a) => ("dispatch", a),
        Command::Slope(a) => ("slope", a),
        Command::Incentives(a) => ("incentives", a),
        Command::Fit(a) => ("fit", a),
        Command::Report(a) => ("report", a),
        Command::Pipeline(a) => ("pipeline", a),
    };
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            report_error(&e);
            return ExitCode::from(VALIDATION);
        }
    };
    let result = if name == "pipeline" {
        run_pipeline(&cfg).map(|b| {
            print_fits(&b.fits.fits);
            println!("bundle written to {}", cfg.out_dir.display());
            !b.manifest.diagnostics.is_empty()
        })
    } else {
        cfg.install(|| stage(name, &cfg)).and_then(|r| r)
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(DIAGNOSTIC),
        Err(e) => {
            report_error(&e);
            ExitCode::from(exit_code(&e))
        }
    }
}
