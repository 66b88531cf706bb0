use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mif_core::benchmark::{analyze_run, load_scenarios, run_benchmark};
use mif_core::fusion::{detect, DetectorParams};
use mif_core::io::{format_params, load_params, load_scenario, load_telemetry, save_params, write_telemetry};
use mif_core::localization::{contribution_at, localize};
use mif_core::optimizer::{mga_optimize, write_log, GaConfig, MetricsConfig, PipelineEvaluator};
use mif_core::pipeline::{calibrate, entropy_streams, fuse, EntropyConfig, TRAINING_FRAMES};
use mif_core::sim::{simulate, PackLayout, TelemetryFrame};
use mif_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mif",
    version,
    about = "Battery-pack ISC simulation, detection and localization"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// RNG seed; overrides the config's seed where one applies.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Detector params file (defaults to the shipped tuned params).
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario config into a telemetry CSV.
    Simulate { config: PathBuf },
    /// Fit normalizers and threshold, optionally tuning W and α first.
    Fit(FitArgs),
    /// Per-frame entropies, statistic and alarms for a dataset.
    Detect {
        dataset: PathBuf,
        /// Use the stored normalizers and threshold instead of refitting
        /// them on the dataset's first 600 frames.
        #[arg(long)]
        fixed_threshold: bool,
    },
    /// Contribution map and estimated fault cell at alarm time t_f.
    Localize {
        dataset: PathBuf,
        /// Alarm time, s.
        #[arg(long = "t-f")]
        t_f: f64,
    },
    /// Run the nine-scenario benchmark and write the report.
    Benchmark {
        #[arg(default_value = "scenarios")]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Normal-condition dataset; its first 600 frames are training data.
    #[arg(long = "normal", required = true)]
    normal: Vec<PathBuf>,
    /// Labeled fault dataset, used by --optimize.
    #[arg(long = "fault")]
    fault: Vec<PathBuf>,
    #[arg(long)]
    optimize: bool,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 50)]
    generations: usize,
    #[arg(long, default_value_t = 30)]
    population: usize,
    /// Per-generation optimization log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

/// Runs `f` against the --out file or stdout. Summary lines go to stdout
/// only when the data went to a file.
fn with_output<F>(out: &Option<PathBuf>, f: F) -> Result<Box<dyn Write>>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let io_err = |path: &Path, e| Error::Io {
        path: path.into(),
        source: e,
    };
    match out {
        Some(path) => {
            let mut w = create(path)?;
            f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))?;
            Ok(Box::new(io::stdout()))
        }
        None => {
            let mut w = io::stdout().lock();
            f(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| io_err(Path::new("<stdout>"), e))?;
            Ok(Box::new(io::stderr()))
        }
    }
}

fn params_or_tuned(common: &Common) -> Result<DetectorParams> {
    match &common.params {
        Some(p) => load_params(p),
        None => Ok(DetectorParams::tuned()),
    }
}

fn layout_for(frames: &[TelemetryFrame]) -> Result<PackLayout> {
    let layout = PackLayout::benchmark(&Default::default())?;
    if let Some(f) = frames.first() {
        if f.temperatures.len() != layout.n_cells() || f.voltages.len() != layout.n_groups() {
            return Err(Error::Dimension(format!(
                "dataset has {} temperatures and {} voltages, the pack needs {} and {}",
                f.temperatures.len(),
                f.voltages.len(),
                layout.n_cells(),
                layout.n_groups()
            )));
        }
    }
    Ok(layout)
}

fn cmd_simulate(common: &Common, config: &Path) -> Result<()> {
    let mut cfg = load_scenario(config)?;
    if let Some(seed) = common.seed {
        cfg.sim.rng_seed = seed;
    }
    let layout = PackLayout::benchmark(&cfg.cell)?;
    let out = simulate(&cfg.sim, &layout, &cfg.cell)?;
    let frames = &out.frames;
    let mut summary = with_output(&common.out, |w| write_telemetry(frames, w))?;
    let abnormal = frames.iter().filter(|f| f.abnormal).count();
    let _ = writeln!(
        summary,
        "frames={} normal={} abnormal={} status={:?}",
        frames.len(),
        frames.len() - abnormal,
        abnormal,
        out.status
    );
    Ok(())
}

fn cmd_fit(common: &Common, a: &FitArgs) -> Result<()> {
    if a.optimize && a.fault.is_empty() {
        return Err(Error::Config(
            "--optimize needs at least one --fault dataset".into(),
        ));
    }
    let mut base = match &common.params {
        Some(p) => load_params(p)?,
        None => DetectorParams::default(),
    };
    if let Some(beta) = a.beta {
        base.beta = beta;
    }
    base.validate()?;

    let normal = a
        .normal
        .iter()
        .map(|p| load_telemetry(p))
        .collect::<Result<Vec<_>>>()?;
    let layout = layout_for(&normal[0])?;
    let coords = &layout.cell_centers;

    if a.optimize {
        let fault = a
            .fault
            .iter()
            .map(|p| load_telemetry(p))
            .collect::<Result<Vec<_>>>()?;
        for f in &fault {
            layout_for(f)?;
        }
        let runs: Vec<&[TelemetryFrame]> = normal.iter().chain(&fault).map(Vec::as_slice).collect();
        let mut ev = PipelineEvaluator::new(runs, coords, base.clone(), MetricsConfig::default())?;
        let ga = GaConfig {
            population: a.population,
            generations: a.generations,
            seed: common.seed.unwrap_or(0),
            ..GaConfig::default()
        };
        let out = mga_optimize(&mut ev, &base, &ga)?;
        if let Some(path) = &a.log {
            let mut w = create(path)?;
            write_log(&out.history, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
        }
        eprintln!(
            "best W={} alpha=[{:.4}, {:.4}, {:.4}] objective={:.4} (ADR {:.2}%, FAR {:.2}%, eta3 {:.4}){}",
            out.best.window,
            out.best.alpha[0],
            out.best.alpha[1],
            out.best.alpha[2],
            out.result.objective,
            100.0 * out.result.adr,
            100.0 * out.result.far,
            out.result.relative_delay,
            if out.fallback {
                " [fallback to defaults]"
            } else {
                ""
            }
        );
        base = out.best.apply(&base);
    }

    let cfg = EntropyConfig::from_params(&base);
    let streams = normal
        .iter()
        .map(|f| entropy_streams(f, cfg, coords))
        .collect::<Result<Vec<_>>>()?;
    let training: Vec<_> = streams
        .iter()
        .map(|s| &s[..TRAINING_FRAMES.min(s.len())])
        .collect();
    let fitted = calibrate(&base, &training)?;
    match &common.out {
        Some(path) => save_params(path, &fitted)?,
        None => print!("{}", format_params(&fitted)),
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

fn cmd_detect(common: &Common, dataset: &Path, fixed: bool) -> Result<()> {
    let params = params_or_tuned(common)?;
    let frames = load_telemetry(dataset)?;
    let layout = layout_for(&frames)?;
    let (calibrated, stream, outcome, t_f) = if fixed {
        let stream = entropy_streams(&frames, EntropyConfig::from_params(&params), &layout.cell_centers)?;
        let outcome = detect(&fuse(&stream, &params), params.threshold);
        let from = frames
            .iter()
            .position(|f| f.abnormal)
            .unwrap_or(0)
            .max(TRAINING_FRAMES);
        let t_f = outcome.first_alarm_from(from);
        (params, stream, outcome, t_f)
    } else {
        let a = analyze_run(&frames, &params, &layout.cell_centers)?;
        let t_f = a
            .detection_frame
            .or_else(|| a.outcome.first_alarm_from(TRAINING_FRAMES));
        (a.calibrated, a.stream, a.outcome, t_f)
    };
    let h_r = calibrated.threshold;
    let norm = calibrated.normalizers();
    let mut summary = with_output(&common.out, |w| {
        writeln!(w, "t,h_d,h_s,h_t,H,H_r,alarm")?;
        for (k, f) in frames.iter().enumerate() {
            let s = stream[k];
            writeln!(
                w,
                "{},{},{},{},{},{h_r},{}",
                f.t,
                fmt_opt(s.map(|s| s.h_d / norm[0])),
                fmt_opt(s.map(|s| s.h_s / norm[1])),
                fmt_opt(s.map(|s| s.h_t / norm[2])),
                fmt_opt(outcome.statistic[k]),
                outcome.alarms[k] as u8
            )?;
        }
        Ok(())
    })?;
    let test = frames.len().saturating_sub(TRAINING_FRAMES);
    let alarms = outcome
        .alarms
        .iter()
        .skip(TRAINING_FRAMES)
        .filter(|&&a| a)
        .count();
    let _ = writeln!(
        summary,
        "t_f={} alarms={alarms}/{test} threshold={h_r}",
        t_f.map_or("none".to_string(), |k| format!("{}", frames[k].t))
    );
    Ok(())
}

fn cmd_localize(common: &Common, dataset: &Path, t_f: f64) -> Result<()> {
    let params = params_or_tuned(common)?;
    let frames = load_telemetry(dataset)?;
    let layout = layout_for(&frames)?;
    let step = match frames.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => 1.0,
    };
    let k = frames
        .iter()
        .position(|f| (f.t - t_f).abs() < 0.5 * step)
        .ok_or_else(|| Error::ConfigKey {
            key: "t_f".into(),
            reason: format!("no frame at t = {t_f}"),
        })?;
    let map = contribution_at(&frames, &EntropyConfig::from_params(&params), k)?;
    let mut summary = with_output(&common.out, |w| map.write_csv(&layout, w))?;
    let _ = writeln!(summary, "estimated fault cell: #{}", localize(&map));
    Ok(())
}

fn cmd_benchmark(common: &Common, dir: &Path) -> Result<bool> {
    let params = params_or_tuned(common)?;
    let scenarios = load_scenarios(dir)?;
    let report = run_benchmark(&scenarios, &params, common.seed.unwrap_or(0));
    let mut summary = with_output(&common.out, |w| report.write_csv(w))?;
    let _ = writeln!(summary, "{}", report.summary());
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Simulate { config } => cmd_simulate(c, config)?,
        Cmd::Fit(a) => cmd_fit(c, a)?,
        Cmd::Detect {
            dataset,
            fixed_threshold,
        } => cmd_detect(c, dataset, *fixed_threshold)?,
        Cmd::Localize { dataset, t_f } => cmd_localize(c, dataset, *t_f)?,
        Cmd::Benchmark { dir } => {
            if !cmd_benchmark(c, dir)? {
                return Ok(ExitCode::from(5));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
