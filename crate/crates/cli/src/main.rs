use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use courtesy::data::{self, SchemaConfig, SyntheticSpec};
use courtesy::irl::{self, Demonstration, IrlConfig};
use courtesy::scenario::{default_robot_weights, Scenario};
use courtesy::sim::{self, SimSettings, SweepRow};
use courtesy::{CostWeights, CourtesyMode};

mod manifest;

use manifest::RunManifest;

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "courtesy", version, about = "Courteous planning simulator and IRL toolkit")]
struct Cli {
    /// Output directory; defaults to a fresh folder under $COURTESY_OUT_DIR (or ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one closed-loop simulation.
    Simulate(ScenarioArgs),
    /// Run one simulation per lambda and write a summary.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated ascending lambda values.
        #[arg(long, default_value = "0,1,10,100,1000,10000")]
        lambda_grid: String,
    },
    /// Learn cost weights from demonstrations.
    IrlFit {
        #[command(flatten)]
        source: DemoSource,
        #[command(flatten)]
        irl: IrlArgs,
        /// Hold out all but this many demos for testing.
        #[arg(long)]
        train_count: Option<usize>,
    },
    /// Plan with fitted weights on test demos and compare.
    IrlEval {
        /// Weights files (`name=value` lines); repeat to compare.
        #[arg(long = "weights", required = true)]
        weights: Vec<PathBuf>,
        #[command(flatten)]
        source: DemoSource,
        #[command(flatten)]
        irl: IrlArgs,
    },
    /// Repeat a run from its manifest.
    Rerun {
        manifest: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Built-in scenario name or JSON file.
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario")]
    positional: Option<String>,
    #[arg(long, conflicts_with = "positional")]
    scenario: Option<String>,
    /// Override a scenario field, e.g. `courtesy.lambda=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Also evaluate all alternative worlds each step and count ordering violations.
    #[arg(long)]
    check_order: bool,
}

impl ScenarioArgs {
    fn reference(&self) -> &str {
        self.scenario.as_deref().or(self.positional.as_deref()).unwrap_or_default()
    }

    fn load(&self, seed: u64) -> Result<Scenario> {
        let mut sc = Scenario::resolve(self.reference())?.with_overrides(&self.overrides)?;
        if let Some(m) = self.mode {
            sc.courtesy.mode = m.into();
        }
        sc.seed = seed;
        sc.validate()?;
        Ok(sc)
    }
}

#[derive(Args, Debug)]
struct DemoSource {
    /// NGSIM-style CSV or a demos JSON file.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Schema for CSV input (JSON).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Generate demos from this scenario family instead of reading data.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 40)]
    count: usize,
    /// Demo length in steps.
    #[arg(long, default_value_t = 15)]
    length: usize,
    /// Generating weights (`name=value` file); defaults to the robot defaults.
    #[arg(long)]
    true_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1000.0)]
    true_lambda: f64,
}

#[derive(Args, Debug)]
struct IrlArgs {
    /// IRL settings (JSON); command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum, default_value = "on")]
    courtesy_feature: Switch,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    NotThere,
    Collaborative,
    Maintain,
}

impl From<Mode> for CourtesyMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::NotThere => CourtesyMode::NotThere,
            Mode::Collaborative => CourtesyMode::Collaborative,
            Mode::Maintain => CourtesyMode::MaintainBehavior,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad lambda `{s}`")).map_err(usage))
        .collect()
}

/// Marks an error as a usage problem.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(format!("{e:#}")))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<courtesy::Error>() {
        Some(
            courtesy::Error::UnknownScenario(_)
            | courtesy::Error::InvalidConfig(_)
            | courtesy::Error::MissingColumn(_)
            | courtesy::Error::Json(_)
            | courtesy::Error::Io(_),
        ) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn out_dir(cli_out: &Option<PathBuf>, command: &str) -> PathBuf {
    match cli_out {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var_os("COURTESY_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            root.join(format!("{}-{command}", chrono::Local::now().format("%Y%m%d-%H%M%S")))
        }
    }
}

fn irl_config(args: &IrlArgs, workers: usize, seed: u64) -> Result<IrlConfig> {
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?)
            .map_err(courtesy::Error::from)?,
        None => IrlConfig::default(),
    };
    if let Some(m) = args.mode {
        cfg.courtesy_mode = m.into();
    }
    cfg.workers = workers;
    cfg.optimizer.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn read_weights(path: &Path) -> Result<CostWeights> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    Ok(irl::parse_weights(&text)?)
}

fn load_demos(src: &DemoSource, cfg: &IrlConfig, seed: u64, out: &Path) -> Result<Vec<Demonstration>> {
    if let Some(path) = &src.data {
        if path.extension().is_some_and(|e| e == "json") {
            return Ok(data::load_demos(path)?);
        }
        let schema: SchemaConfig = match &src.schema {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(courtesy::Error::from)?,
            None => SchemaConfig::default(),
        };
        let (demos, report) = data::load_dataset(path, &schema)?;
        fs::write(out.join("load_report.json"), serde_json::to_string_pretty(&report)?)?;
        return Ok(demos);
    }
    let Some(name) = &src.synthetic else {
        return Err(usage(anyhow::anyhow!("either --data or --synthetic is required")));
    };
    let sc = Scenario::resolve(name)?;
    let theta = match &src.true_weights {
        Some(p) => read_weights(p)?,
        None => default_robot_weights(),
    };
    let mut spec = SyntheticSpec::new(sc, CostWeights { courtesy: 0.0, ..theta }, src.true_lambda, src.length);
    spec.mode = cfg.courtesy_mode;
    spec.other_weights = cfg.other_weights;
    let (demos, skipped) = data::generate_synthetic_demos(&spec, src.count, seed)?;
    if skipped > 0 {
        log::warn!("{skipped} synthetic demos failed to plan");
    }
    Ok(demos)
}

fn write_summary(rows: &[SweepRow], path: &Path) -> Result<()> {
    sim::write_summary_csv(rows, fs::File::create(path)?)?;
    Ok(())
}

fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let command = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Sweep { .. } => "sweep",
        Command::IrlFit { .. } => "irl-fit",
        Command::IrlEval { .. } => "irl-eval",
        Command::Rerun { .. } => "rerun",
    };
    if let Command::Rerun { manifest } = &cli.command {
        let m = RunManifest::read(manifest)?;
        let mut args = vec!["courtesy".to_string()];
        args.extend(m.args.iter().cloned());
        let mut again = Cli::try_parse_from(&args).map_err(|e| usage(e.into()))?;
        again.out = Some(cli.out.clone().unwrap_or_else(|| m.output_dir.clone()));
        return run(&again, &m.args);
    }

    if let Command::Simulate(s) | Command::Sweep { scenario: s, .. } = &cli.command {
        s.load(cli.seed).map_err(usage)?;
    }
    if let Command::Sweep { lambda_grid, .. } = &cli.command {
        parse_grid(lambda_grid)?;
    }
    let out = out_dir(&cli.out, command);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = RunManifest::new(command, argv, &out, cli.seed);
    let mut manifest = match &cli.command {
        Command::Simulate(s) | Command::Sweep { scenario: s, .. } => {
            let mut m = manifest.with_overrides(&s.overrides);
            if Path::new(s.reference()).exists() {
                m.config_paths.push(s.reference().into());
            }
            m
        }
        Command::IrlFit { source, irl, .. } | Command::IrlEval { source, irl, .. } => {
            let mut m = manifest;
            m.config_paths.extend(irl.config.iter().chain(&source.schema).chain(&source.data).cloned());
            m
        }
        Command::Rerun { .. } => unreachable!(),
    };
    if let Command::IrlEval { weights, .. } = &cli.command {
        manifest.config_paths.extend(weights.iter().cloned());
    }
    manifest.write(&out)?;
    info!("writing to {}", out.display());

    match &cli.command {
        Command::Simulate(s) => {
            let sc = s.load(cli.seed).map_err(usage)?;
            fs::write(out.join("scenario.json"), sc.to_json()?)?;
            let settings = SimSettings { check_alternative_order: s.check_order };
            let (row, log) = match sim::simulate(&sc, &settings) {
                Ok(log) => (SweepRow { lambda: sc.courtesy.lambda, metrics: Some(log.metrics.clone()), error: None }, log),
                Err(f) => {
                    sim::write_log_file(&f.log, &out)?;
                    return Err(anyhow::Error::new(f));
                }
            };
            let path = sim::write_log_file(&log, &out)?;
            write_summary(&[row], &out.join("summary.csv"))?;
            println!("{}", path.display());
        }
        Command::Sweep { scenario, lambda_grid } => {
            let sc = scenario.load(cli.seed).map_err(usage)?;
            let grid = parse_grid(lambda_grid)?;
            fs::write(out.join("scenario.json"), sc.to_json()?)?;
            let settings = SimSettings { check_alternative_order: scenario.check_order };
            let results = sim::sweep_lambda(&sc, &grid, &settings, cli.workers)?;
            let mut rows = Vec::new();
            for (row, log) in results {
                if let Some(log) = log {
                    sim::write_log_file(&log, &out)?;
                }
                rows.push(row);
            }
            write_summary(&rows, &out.join("sweep_summary.csv"))?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                bail!("{failed} of {} runs failed", rows.len());
            }
        }
        Command::IrlFit { source, irl: args, train_count } => {
            let cfg = irl_config(args, cli.workers, cli.seed)?;
            let demos = load_demos(source, &cfg, cli.seed, &out)?;
            let train = match train_count {
                Some(n) => {
                    let (train, test) = data::split(&demos, *n, cli.seed)?;
                    data::save_demos(&out.join("test_demos.json"), &test)?;
                    train
                }
                None => demos,
            };
            data::save_demos(&out.join("train_demos.json"), &train)?;
            let save = |tag: &str, fit: &irl::FitResult| -> Result<()> {
                irl::write_weights(&fit.weights, fs::File::create(out.join(format!("weights_{tag}.txt")))?)?;
                irl::write_curve_csv(&fit.curve, fs::File::create(out.join(format!("curve_{tag}.csv")))?)?;
                println!("{tag}: loss {:.6} after {} epochs ({} demos, {} skipped)", fit.final_loss(), fit.curve.len(), fit.used, fit.skipped);
                Ok(())
            };
            if args.courtesy_feature == Switch::On {
                let (plain, court) = irl::fit_pair(&train, &cfg)?;
                save("selfish", &plain)?;
                save("courtesy", &court)?;
            } else {
                let plain = irl::fit(&train, &IrlConfig { use_courtesy_feature: false, ..cfg })?;
                save("selfish", &plain)?;
            }
        }
        Command::IrlEval { weights, source, irl: args } => {
            let cfg = irl_config(args, cli.workers, cli.seed)?;
            let demos = load_demos(source, &cfg, cli.seed, &out)?;
            let mut ab = csv::Writer::from_path(out.join("ab_summary.csv"))?;
            ab.write_record(["weights", "courtesy_feature", "mean_med", "mean_gap_error", "failed", "demos"])?;
            for path in weights {
                let w = read_weights(path)?;
                let use_courtesy = args.courtesy_feature == Switch::On && w.courtesy > 0.0;
                let run_cfg = IrlConfig { use_courtesy_feature: use_courtesy, ..cfg.clone() };
                let report = irl::evaluate(&w, &demos, &run_cfg)?;
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "weights".into());
                irl::write_eval_csv(&report, fs::File::create(out.join(format!("med_{stem}.csv")))?)?;
                ab.write_record([
                    path.display().to_string(),
                    use_courtesy.to_string(),
                    report.mean_med.to_string(),
                    report.mean_gap_error.to_string(),
                    report.failed.to_string(),
                    report.rows.len().to_string(),
                ])?;
                println!("{}: mean MED {:.5}", path.display(), report.mean_med);
            }
            ab.flush()?;
        }
        Command::Rerun { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    // The manifest records the arguments without the output directory, which
    // a rerun supplies itself.
    let recorded = manifest::strip_out(&argv);
    match run(&cli, &recorded) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
