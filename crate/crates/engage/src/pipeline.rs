//! Replays episode files through both stages and writes the results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use engage_core::features::window_features;
use engage_core::gate::{
    run_stage_one, track_windows, GazeClassifier, StageOneBudget, WindowContext,
};
use engage_core::gbdt::{fit, GbdtModel, Metrics};
use engage_core::replay::{replay_episode, EpisodeRun, MetricsReport};
use engage_core::sim::training_windows;
use engage_core::vlm::{BackendError, MockBackend, Strategy, VlmBackend, VlmRequest};
use engage_core::{Action, Decision, Episode, GateConfig, Provenance, TriggerEvent, TriggerKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{HttpBackend, InFlightLimit, TOKEN_ENV};
use crate::config::{BackendKind, RunConfig};
use crate::{episode_io, features_io, mock_dir, model_io};

/// Episode files under `path` (a directory) or `path` itself.
pub fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    let files = if path.is_dir() {
        episode_io::list_episodes(path)?
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|f| episode_io::read_episode(f).map_err(Into::into))
        .collect()
}

/// Loads the configured model, or trains one from the feature file.
pub fn obtain_model(cfg: &RunConfig) -> Result<GbdtModel> {
    if let Some(m) = &cfg.paths.model {
        return Ok(model_io::read_model(m)?);
    }
    let path = cfg
        .paths
        .features
        .as_ref()
        .context("no model or feature file configured")?;
    let rows = features_io::read_features(path)?;
    log::info!("training on {} windows from {}", rows.len(), path.display());
    Ok(fit(&features_io::labeled_set(&rows), &cfg.train)?)
}

pub enum AnyBackend {
    Mock(MockBackend),
    Http(HttpBackend),
}

impl VlmBackend for AnyBackend {
    fn complete(&self, req: &VlmRequest) -> Result<String, BackendError> {
        match self {
            AnyBackend::Mock(b) => b.complete(req),
            AnyBackend::Http(b) => b.complete(req),
        }
    }

    fn backoff(&self, retry: u32, delay_ms: u64) {
        match self {
            AnyBackend::Mock(b) => b.backoff(retry, delay_ms),
            AnyBackend::Http(b) => b.backoff(retry, delay_ms),
        }
    }
}

pub fn build_backend(cfg: &RunConfig) -> Result<InFlightLimit<AnyBackend>> {
    let b = &cfg.backend;
    let inner = match b.kind {
        BackendKind::Mock => {
            let dir = cfg
                .paths
                .mock_scripts
                .as_ref()
                .context("paths.mock_scripts is not set")?;
            AnyBackend::Mock(mock_dir::read_scripts(dir)?)
        }
        BackendKind::Http => {
            let token =
                std::env::var(TOKEN_ENV).with_context(|| format!("{TOKEN_ENV} is not set"))?;
            AnyBackend::Http(HttpBackend::new(
                &b.endpoint,
                &b.model_id,
                &token,
                Duration::from_secs_f64(b.timeout_s),
            )?)
        }
    };
    Ok(InFlightLimit::new(inner, b.max_in_flight))
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub episode_id: String,
    pub track_id: String,
    pub kind: Option<TriggerKind>,
    pub time_s: f64,
    pub action: Action,
    pub provenance: Provenance,
    pub justification: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl DecisionRecord {
    pub fn new(episode_id: &str, d: &Decision) -> Self {
        Self {
            episode_id: episode_id.into(),
            track_id: d.source.track_id.0.clone(),
            kind: d.source.kind,
            time_s: d.source.time_s,
            action: d.action,
            provenance: d.provenance,
            justification: d.justification.clone(),
            diagnostic: d.diagnostic.clone(),
        }
    }
}

pub struct PipelineOutput {
    pub report: MetricsReport,
    pub decisions: Vec<DecisionRecord>,
    pub runs: Vec<(String, EpisodeRun)>,
}

/// Classifier metrics over the labelled windows of `episodes`; `None`
/// without labels.
pub fn classifier_metrics(
    episodes: &[Episode],
    model: &GbdtModel,
    gate: &GateConfig,
) -> Result<Option<Metrics>> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for ep in episodes {
        let Some(l) = &ep.labels else { continue };
        let (windows, _) = training_windows(ep, l, &gate.features, gate.window_s);
        for w in windows {
            scores.push(model.predict_proba(w.features.as_slice())?);
            labels.push(w.label);
        }
    }
    Ok((!scores.is_empty()).then(|| Metrics::from_scores(&scores, &labels, model.threshold())))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    Ok(pool.install(f))
}

/// Replays every episode in parallel. Results keep the input order, so
/// the output does not depend on scheduling.
pub fn run_pipeline(
    episodes: &[Episode],
    model: &GbdtModel,
    backend: &dyn VlmBackend,
    cfg: &RunConfig,
) -> Result<PipelineOutput> {
    let runs: Vec<EpisodeRun> = in_pool(cfg.run.threads, || {
        episodes
            .par_iter()
            .map(|ep| {
                replay_episode(
                    ep,
                    model,
                    backend,
                    &cfg.gate,
                    &cfg.stage_two,
                    cfg.run.scenario_keys,
                )
            })
            .collect()
    })?;
    let mut report = MetricsReport::from_scores(runs.iter().map(|r| &r.score));
    report.classifier = classifier_metrics(episodes, model, &cfg.gate)?;
    let decisions = episodes
        .iter()
        .zip(&runs)
        .flat_map(|(ep, r)| r.decisions.iter().map(|d| DecisionRecord::new(&ep.id, d)))
        .collect();
    Ok(PipelineOutput {
        report,
        decisions,
        runs: episodes.iter().map(|e| e.id.clone()).zip(runs).collect(),
    })
}

pub fn decisions_to_ndjson(decisions: &[DecisionRecord]) -> String {
    let mut out = String::new();
    for d in decisions {
        out.push_str(&serde_json::to_string(d).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn report_to_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize") + "\n"
}

/// Writes `decisions.ndjson`, `report.json` and `report.txt` into `dir`.
pub fn write_outputs(dir: &Path, out: &PipelineOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = [
        ("decisions.ndjson", decisions_to_ndjson(&out.decisions)),
        ("report.json", report_to_json(&out.report)),
        ("report.txt", out.report.render_text()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    Ok(written)
}

/// One line of the trigger report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub episode_id: String,
    pub track_id: String,
    pub kind: TriggerKind,
    pub time_s: f64,
    pub clip_start_s: f64,
    pub clip_end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl TriggerRecord {
    pub fn new(episode_id: &str, e: &TriggerEvent) -> Self {
        Self {
            episode_id: episode_id.into(),
            track_id: e.track_id.0.clone(),
            kind: e.kind,
            time_s: e.trigger_time,
            clip_start_s: e.clip.start_s,
            clip_end_s: e.clip.end_s,
            score: e.score,
        }
    }
}

/// Overlay sidecar: every clip's box plan for external compositing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySidecar {
    pub v: u32,
    pub episode_id: String,
    pub clips: Vec<TriggerEvent>,
}

pub struct GateOutput {
    pub triggers: Vec<TriggerRecord>,
    pub budget: StageOneBudget,
    pub overlay: OverlaySidecar,
}

pub fn run_gate(
    episode: &Episode,
    classifier: &dyn GazeClassifier,
    gate: &GateConfig,
) -> GateOutput {
    let r = run_stage_one(episode, classifier, gate);
    GateOutput {
        triggers: r
            .events
            .iter()
            .map(|e| TriggerRecord::new(&episode.id, e))
            .collect(),
        budget: r.budget,
        overlay: OverlaySidecar {
            v: 1,
            episode_id: episode.id.clone(),
            clips: r.events,
        },
    }
}

/// Tab-separated per-frame signals and velocities for every window whose
/// features compute. Columns: track, window start, frame index, the seven
/// signals, their seven first differences (empty on a window's first frame),
/// and the classifier score.
pub fn trace_dump(episode: &Episode, classifier: &dyn GazeClassifier, gate: &GateConfig) -> String {
    use engage_core::features::Signal;
    let mut out = String::from("track_id\twindow_start\tframe");
    for s in Signal::ALL {
        let _ = write!(out, "\t{}", s.name());
    }
    for s in Signal::ALL {
        let _ = write!(out, "\t{}_v", s.name());
    }
    out.push_str("\tscore\n");
    let end = episode.end_s();
    for track in &episode.tracks {
        for w in track_windows(track, gate, end) {
            let Ok((signals, features)) =
                window_features(w.track_id, w.start_s, w.frames, &gate.features)
            else {
                continue;
            };
            let ctx = WindowContext {
                track_id: w.track_id,
                start_s: w.start_s,
                end_s: w.end_s,
            };
            let score = classifier.score(&ctx, &features).ok();
            let v = signals.velocities();
            for i in 0..signals.len() {
                let _ = write!(out, "{}\t{}\t{i}", track.id, w.start_s);
                for s in Signal::ALL {
                    let _ = write!(out, "\t{}", signals.series(s)[i]);
                }
                for s in Signal::ALL {
                    match i.checked_sub(1) {
                        Some(j) => {
                            let _ = write!(out, "\t{}", v[s.index()][j]);
                        }
                        None => out.push('\t'),
                    }
                }
                match score {
                    Some(p) => {
                        let _ = writeln!(out, "\t{p}");
                    }
                    None => out.push_str("\t\n"),
                }
            }
        }
    }
    out
}

/// Both aggregation strategies over the same episodes, one report each.
pub fn compare_strategies(
    episodes: &[Episode],
    model: &GbdtModel,
    backend: &dyn VlmBackend,
    cfg: &RunConfig,
) -> Result<Vec<(Strategy, MetricsReport)>> {
    [Strategy::SelfConsistency, Strategy::SelfCritique]
        .into_iter()
        .map(|s| {
            let mut c = cfg.clone();
            c.stage_two.strategy = s;
            Ok((s, run_pipeline(episodes, model, backend, &c)?.report))
        })
        .collect()
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::SelfConsistency => "self_consistency",
        Strategy::SelfCritique => "self_critique",
    }
}

/// Side-by-side table of the comparison, one row per metric.
pub fn render_comparison(rows: &[(Strategy, MetricsReport)]) -> String {
    type Metric = (&'static str, fn(&MetricsReport) -> String);
    let metrics: [Metric; 11] = [
        ("vlm clips", |r| r.budget.vlm_clips().to_string()),
        ("backend requests", |r| r.budget.backend.total().to_string()),
        ("decisions", |r| r.decisions.total.to_string()),
        ("approach", |r| r.decisions.approach.to_string()),
        ("leave", |r| r.decisions.leave.to_string()),
        ("probe", |r| r.decisions.probe.to_string()),
        ("action prompt", |r| r.decisions.action_prompt.to_string()),
        ("uncertainty deferral", |r| {
            r.decisions.uncertainty_deferral.to_string()
        }),
        ("critique inconclusive", |r| {
            r.decisions.critique_inconclusive.to_string()
        }),
        ("backend failures", |r| {
            r.decisions.backend_failures.to_string()
        }),
        ("action accuracy", |r| {
            format!("{:.3}", r.decisions.accuracy())
        }),
    ];
    let mut out = format!("{:<24}", "metric");
    for (s, _) in rows {
        let _ = write!(out, "{:>18}", strategy_name(*s));
    }
    out.push('\n');
    for (name, f) in metrics {
        let _ = write!(out, "{name:<24}");
        for (_, r) in rows {
            let _ = write!(out, "{:>18}", f(r));
        }
        out.push('\n');
    }
    out
}
