use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use engage::config::{ConfigErrors, RunConfig};
use engage::features_io::{labeled_set, read_features};
use engage::pipeline::{self, report_to_json};
use engage::{episode_io, model_io, suite};
use engage_core::gbdt::{evaluate, fit_with_log};
use engage_core::replay::MetricsReport;

#[derive(Parser)]
#[command(
    name = "engage",
    version,
    about = "Engagement detection: simulate, train, gate and replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scenario generation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Gaze classifier training and evaluation.
    #[command(subcommand)]
    Gbdt(GbdtCmd),
    /// Stage I only.
    #[command(subcommand)]
    Gate(GateCmd),
    /// Both stages over a set of episodes.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

/// Configuration shared by subcommands that take one.
#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set stage_two.eta=0.4`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, ConfigErrors> {
        match &self.config {
            Some(p) => RunConfig::load(p, &self.overrides),
            None => RunConfig::from_overrides(&self.overrides),
        }
    }

    /// Loads and also checks inputs, backend settings and credentials.
    fn load_for_pipeline(&self) -> Result<RunConfig, ConfigErrors> {
        RunConfig::load_for_pipeline(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum SimCmd {
    /// Render a scenario suite into episodes, labels, mock scripts and features.
    Gen {
        /// Suite file (JSON array of scenarios, or TOML with [[scenario]] tables).
        #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
        suite: Option<PathBuf>,
        /// Built-in suite: `benchmark` or `gaze:<n>`.
        #[arg(long)]
        builtin: Option<String>,
        /// Seed for built-in suites.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum GbdtCmd {
    /// Fit a model on a labelled feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a model on a labelled feature file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum GateCmd {
    /// Run Stage I on one episode and print its triggers as NDJSON.
    Run {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the overlay sidecar (clip spans and box plans) here.
        #[arg(long)]
        overlay_out: Option<PathBuf>,
        /// Write per-window signal and velocity traces (TSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Replay episodes through both stages and write the report.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; overrides paths.out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both aggregation strategies and print them side by side.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<ConfigErrors>() {
            Some(errs) => {
                eprintln!("configuration errors:");
                for m in &errs.0 {
                    eprintln!("  {m}");
                }
                ExitCode::from(2)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Sim(SimCmd::Gen {
            suite,
            builtin,
            seed,
            out,
            cfg,
        }) => {
            let cfg = cfg.load()?;
            let specs = match (suite, builtin) {
                (Some(p), _) => suite::read_suite(&p)?,
                (None, Some(name)) => suite::builtin_suite(&name, seed)?,
                (None, None) => bail!("one of --suite or --builtin is required"),
            };
            let s = suite::generate(&specs, &out, &cfg.gate.features, cfg.gate.window_s)?;
            println!(
                "{} episodes, {} mock scripts, {} feature rows from {} preambles -> {}",
                s.episodes,
                s.scripts,
                s.feature_rows,
                s.preambles,
                out.display()
            );
        }
        Command::Gbdt(GbdtCmd::Train { features, out, cfg }) => {
            let cfg = cfg.load()?;
            let data = labeled_set(&read_features(&features)?);
            let (model, log) = fit_with_log(&data, &cfg.train)?;
            model_io::write_model(&out, &model)?;
            println!(
                "trained {} trees on {} rows ({} positive), final loss {:.6} -> {}",
                model.trees().len(),
                data.len(),
                data.positives(),
                log.log_loss.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Gbdt(GbdtCmd::Eval {
            model,
            features,
            json,
        }) => {
            let model = model_io::read_model(&model)?;
            let data = labeled_set(&read_features(&features)?);
            let m = evaluate(&model, &data)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&m)?);
            } else {
                let report = MetricsReport {
                    classifier: Some(m),
                    ..Default::default()
                };
                let text = report.render_text();
                let block: Vec<&str> = text
                    .lines()
                    .skip_while(|l| !l.starts_with("classifier:"))
                    .take_while(|l| !l.starts_with("call budget:"))
                    .collect();
                println!("rows: {}\n{}", data.len(), block.join("\n"));
            }
        }
        Command::Gate(GateCmd::Run {
            episode,
            model,
            cfg,
            overlay_out,
            trace,
        }) => {
            let cfg = cfg.load()?;
            let ep = episode_io::read_episode(&episode)?;
            let model = model_io::read_model(&model)?;
            let out = pipeline::run_gate(&ep, &model, &cfg.gate);
            for t in &out.triggers {
                println!("{}", serde_json::to_string(t)?);
            }
            let b = out.budget;
            eprintln!(
                "windows {}, excluded far {}, classifier runs {}, clips {} (gaze {}, proxemic {})",
                b.windows,
                b.excluded_far,
                b.classifier_runs,
                b.vlm_calls(),
                b.gaze_events,
                b.proxemic_events
            );
            if let Some(p) = overlay_out {
                write(&p, serde_json::to_string_pretty(&out.overlay)? + "\n")?;
            }
            if let Some(p) = trace {
                write(&p, pipeline::trace_dump(&ep, &model, &cfg.gate))?;
            }
        }
        Command::Pipeline(PipelineCmd::Run { cfg, out }) => {
            let mut cfg = cfg.load_for_pipeline()?;
            if out.is_some() {
                cfg.paths.out = out;
            }
            let (episodes, model, backend) = prepare(&cfg)?;
            let result = pipeline::run_pipeline(&episodes, &model, &backend, &cfg)?;
            match &cfg.paths.out {
                Some(dir) => {
                    for p in pipeline::write_outputs(dir, &result)? {
                        eprintln!("wrote {}", p.display());
                    }
                    print!("{}", result.report.render_text());
                }
                None => print!("{}", report_to_json(&result.report)),
            }
        }
        Command::Pipeline(PipelineCmd::Compare { cfg }) => {
            let cfg = cfg.load_for_pipeline()?;
            let (episodes, model, backend) = prepare(&cfg)?;
            let rows = pipeline::compare_strategies(&episodes, &model, &backend, &cfg)?;
            print!("{}", pipeline::render_comparison(&rows));
        }
    }
    Ok(())
}

type Prepared = (
    Vec<engage_core::Episode>,
    engage_core::GbdtModel,
    engage::backend::InFlightLimit<pipeline::AnyBackend>,
);

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let dir = cfg
        .paths
        .episodes
        .as_ref()
        .context("paths.episodes is not set")?;
    let episodes = pipeline::load_episodes(dir)?;
    let model = pipeline::obtain_model(cfg)?;
    let backend = pipeline::build_backend(cfg)?;
    Ok((episodes, model, backend))
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
