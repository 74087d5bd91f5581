//! Replays episodes through both stages and scores them against ground
//! truth.
//!
//! Per-episode results are [`EpisodeScore`]s; [`MetricsReport::add`] folds
//! them in any order with the same result.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::gate::{
    run_stage_one, GateConfig, GazeClassifier, StageOneBudget, TriggerEvent, TriggerKind,
};
use crate::gbdt::Metrics;
use crate::pose::{Episode, EpisodeLabels, TrackId, TrackLabels};
use crate::sim::mock_scenario;
use crate::vlm::{
    run_event, Action, CallCounts, ClipRef, Decision, DecisionSource, OrchestratorConfig,
    Provenance, VlmBackend,
};

const TIME_EPS: f64 = 1e-6;

/// Distance-only baseline: one trigger per track at its first personal-zone
/// sample, with a clip covering the following `proxemic_tail_s`.
pub fn baseline_distance_only(episode: &Episode, config: &GateConfig) -> Vec<TriggerEvent> {
    let end = episode.end_s();
    episode
        .tracks
        .iter()
        .filter_map(|track| {
            let entry = track
                .frames
                .iter()
                .find(|f| f.distance_m.is_some_and(|d| d <= config.personal_zone_m))?;
            Some(TriggerEvent::new(
                track.id.clone(),
                TriggerKind::ProxemicEntry,
                entry.timestamp,
                None,
                config,
                end,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    OnTime,
    Late,
    Missed,
}

/// Reference time for scoring a track: the window of its first preamble,
/// else the first labelled escalation.
fn reference_window(labels: &TrackLabels, window_s: f64) -> Option<f64> {
    if let Some(&t) = labels.preamble_times.first() {
        return Some(libm::floor(t / window_s + 1e-9) * window_s);
    }
    labels
        .decisions
        .iter()
        .find(|c| c.action != Action::Probe)
        .map(|c| c.start_s)
}

/// Scores trigger times for one interactant. On time means a trigger inside
/// the reference window widened by one window on each side; late means the
/// first trigger comes after that; anything else is a miss.
pub fn classify_timing(labels: &TrackLabels, trigger_times: &[f64], window_s: f64) -> Timing {
    let Some(reference) = reference_window(labels, window_s) else {
        return if trigger_times.is_empty() {
            Timing::Missed
        } else {
            Timing::Late
        };
    };
    let (lo, hi) = (
        reference - window_s - TIME_EPS,
        reference + 2.0 * window_s - TIME_EPS,
    );
    if trigger_times.iter().any(|&t| t >= lo && t < hi) {
        Timing::OnTime
    } else if trigger_times.iter().any(|&t| t >= hi) {
        Timing::Late
    } else {
        Timing::Missed
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub interactants: usize,
    pub on_time: usize,
    pub late: usize,
    pub missed: usize,
}

impl TimingSummary {
    pub fn record(&mut self, t: Timing) {
        self.interactants += 1;
        match t {
            Timing::OnTime => self.on_time += 1,
            Timing::Late => self.late += 1,
            Timing::Missed => self.missed += 1,
        }
    }

    pub fn on_time_rate(&self) -> f64 {
        rate(self.on_time, self.interactants)
    }

    fn add(&mut self, o: &Self) {
        self.interactants += o.interactants;
        self.on_time += o.on_time;
        self.late += o.late;
        self.missed += o.missed;
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn timing_for(labels: &EpisodeLabels, events: &[TriggerEvent], window_s: f64) -> TimingSummary {
    let mut s = TimingSummary::default();
    for tl in labels.tracks.iter().filter(|t| t.interactant) {
        let times: Vec<f64> = events
            .iter()
            .filter(|e| e.track_id == tl.track_id)
            .map(|e| e.trigger_time)
            .collect();
        s.record(classify_timing(tl, &times, window_s));
    }
    s
}

/// Track whose first trigger is earliest; ties go to the smaller track id.
pub fn predicted_main_interactant(events: &[TriggerEvent]) -> Option<&TrackId> {
    events
        .iter()
        .min_by(|a, b| {
            a.trigger_time
                .total_cmp(&b.trigger_time)
                .then_with(|| a.track_id.cmp(&b.track_id))
        })
        .map(|e| &e.track_id)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub total: usize,
    pub approach: usize,
    pub leave: usize,
    pub probe: usize,
    /// Decisions whose track has labels.
    pub scored: usize,
    pub correct: usize,
    pub action_prompt: usize,
    pub uncertainty_deferral: usize,
    pub critique_inconclusive: usize,
    /// Events whose backend calls failed after retries.
    pub backend_failures: usize,
    /// Action responses that could not be parsed.
    pub unparseable_actions: usize,
}

impl DecisionCounts {
    fn add(&mut self, o: &Self) {
        self.total += o.total;
        self.approach += o.approach;
        self.leave += o.leave;
        self.probe += o.probe;
        self.scored += o.scored;
        self.correct += o.correct;
        self.action_prompt += o.action_prompt;
        self.uncertainty_deferral += o.uncertainty_deferral;
        self.critique_inconclusive += o.critique_inconclusive;
        self.backend_failures += o.backend_failures;
        self.unparseable_actions += o.unparseable_actions;
    }

    pub fn accuracy(&self) -> f64 {
        rate(self.correct, self.scored)
    }
}

/// Everything one replayed episode contributes to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub episode_id: String,
    pub stage_one: StageOneBudget,
    pub backend: CallCounts,
    pub baseline_clips: usize,
    pub timing: TimingSummary,
    pub baseline_timing: TimingSummary,
    pub main_interactant_labelled: bool,
    pub main_interactant_hit: bool,
    pub decisions: DecisionCounts,
}

/// One replayed episode with its decision log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub events: Vec<TriggerEvent>,
    pub decisions: Vec<Decision>,
    pub baseline: Vec<TriggerEvent>,
    pub score: EpisodeScore,
}

/// Replays one episode: Stage I, Stage II for each grouped event, the
/// distance-only baseline, and scoring against the episode's labels.
///
/// With `scenario_keys`, clips carry `episode/track` scenario ids for
/// scripted backends. Backend failures turn into deferred Probe decisions.
pub fn replay_episode(
    episode: &Episode,
    classifier: &dyn GazeClassifier,
    backend: &dyn VlmBackend,
    gate: &GateConfig,
    orchestrator: &OrchestratorConfig,
    scenario_keys: bool,
) -> EpisodeRun {
    let stage_one = run_stage_one(episode, classifier, gate);
    let mut backend_calls = CallCounts::default();
    let mut decisions = Vec::with_capacity(stage_one.events.len());
    let mut counts = DecisionCounts::default();
    for event in &stage_one.events {
        let mut clip = ClipRef::for_event(&episode.id, event);
        if scenario_keys {
            clip.scenario_id = Some(mock_scenario(&episode.id, &event.track_id));
        }
        let decision = match run_event(&clip, event, backend, orchestrator, &mut backend_calls) {
            Ok(out) => out.decision,
            Err(e) => {
                log::error!(
                    "{} {} at {:.2}s: {e}",
                    episode.id,
                    event.track_id,
                    event.trigger_time
                );
                counts.backend_failures += 1;
                Decision {
                    action: Action::Probe,
                    justification: "backend unavailable".into(),
                    provenance: Provenance::UncertaintyDeferral,
                    source: DecisionSource {
                        track_id: event.track_id.clone(),
                        kind: Some(event.kind),
                        time_s: event.trigger_time,
                    },
                    diagnostic: Some(format!("{e}")),
                }
            }
        };
        decisions.push(decision);
    }
    let baseline = baseline_distance_only(episode, gate);

    for d in &decisions {
        counts.total += 1;
        match d.action {
            Action::Approach => counts.approach += 1,
            Action::Leave => counts.leave += 1,
            Action::Probe => counts.probe += 1,
        }
        match d.provenance {
            Provenance::ActionPrompt => counts.action_prompt += 1,
            Provenance::UncertaintyDeferral => counts.uncertainty_deferral += 1,
            Provenance::CritiqueInconclusive => counts.critique_inconclusive += 1,
            Provenance::GateDefault => {}
        }
        if d.provenance == Provenance::ActionPrompt && d.diagnostic.is_some() {
            counts.unparseable_actions += 1;
        }
        if let Some(tl) = episode
            .labels
            .as_ref()
            .and_then(|l| l.track(&d.source.track_id))
        {
            counts.scored += 1;
            if tl.action_at(d.source.time_s) == d.action {
                counts.correct += 1;
            }
        }
    }

    let empty = EpisodeLabels::default();
    let labels = episode.labels.as_ref().unwrap_or(&empty);
    let main = labels.main_interactant.as_ref();
    let score = EpisodeScore {
        episode_id: episode.id.clone(),
        stage_one: stage_one.budget,
        backend: backend_calls,
        baseline_clips: baseline.len(),
        timing: timing_for(labels, &stage_one.events, gate.window_s),
        baseline_timing: timing_for(labels, &baseline, gate.window_s),
        main_interactant_labelled: main.is_some(),
        main_interactant_hit: main.is_some()
            && predicted_main_interactant(&stage_one.events) == main,
        decisions: counts,
    };
    EpisodeRun {
        events: stage_one.events,
        decisions,
        baseline,
        score,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallBudget {
    /// Person-windows seen, i.e. the exhaustive per-person-per-window calls.
    pub exhaustive_calls: usize,
    pub excluded_far: usize,
    pub classifier_runs: usize,
    pub vlm_clips_gaze: usize,
    pub vlm_clips_proxemic: usize,
    pub baseline_clips: usize,
    pub backend: CallCounts,
}

impl CallBudget {
    pub fn vlm_clips(&self) -> usize {
        self.vlm_clips_gaze + self.vlm_clips_proxemic
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainInteractant {
    pub labelled: usize,
    pub hits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    /// Held-out gaze classifier metrics, when evaluated.
    pub classifier: Option<Metrics>,
    pub budget: CallBudget,
    pub timing: TimingSummary,
    pub baseline_timing: TimingSummary,
    pub main_interactant: MainInteractant,
    pub decisions: DecisionCounts,
}

impl MetricsReport {
    pub fn add(&mut self, s: &EpisodeScore) {
        self.episodes += 1;
        let b = &mut self.budget;
        b.exhaustive_calls += s.stage_one.windows;
        b.excluded_far += s.stage_one.excluded_far;
        b.classifier_runs += s.stage_one.classifier_runs;
        b.vlm_clips_gaze += s.stage_one.gaze_events;
        b.vlm_clips_proxemic += s.stage_one.proxemic_events;
        b.baseline_clips += s.baseline_clips;
        b.backend.add(&s.backend);
        self.timing.add(&s.timing);
        self.baseline_timing.add(&s.baseline_timing);
        if s.main_interactant_labelled {
            self.main_interactant.labelled += 1;
            if s.main_interactant_hit {
                self.main_interactant.hits += 1;
            }
        }
        self.decisions.add(&s.decisions);
    }

    pub fn from_scores<'a>(scores: impl IntoIterator<Item = &'a EpisodeScore>) -> Self {
        let mut r = Self::default();
        for s in scores {
            r.add(s);
        }
        r
    }

    /// Human-readable report. Field order is fixed; rates have three
    /// decimals; counts are always printed, zeros included.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let f3 = |x: f64| format!("{x:.3}");
        let b = &self.budget;
        let _ = writeln!(out, "episodes: {}", self.episodes);
        out.push_str("classifier:\n");
        match &self.classifier {
            Some(m) => {
                let c = m.confusion;
                let _ = writeln!(out, "  accuracy: {}", f3(m.accuracy));
                let _ = writeln!(out, "  precision: {}", f3(m.precision));
                let _ = writeln!(out, "  recall: {}", f3(m.recall));
                let _ = writeln!(out, "  f1: {}", f3(m.f1));
                let _ = writeln!(out, "  roc_auc: {}", m.roc_auc.map_or("n/a".into(), f3));
                let _ = writeln!(
                    out,
                    "  confusion: [[{}, {}], [{}, {}]]",
                    c.tn, c.fp, c.fn_, c.tp
                );
            }
            None => out.push_str("  not evaluated\n"),
        }
        out.push_str("call budget:\n");
        let _ = writeln!(out, "  exhaustive calls: {}", b.exhaustive_calls);
        let _ = writeln!(out, "  excluded far: {}", b.excluded_far);
        let _ = writeln!(out, "  classifier runs: {}", b.classifier_runs);
        let _ = writeln!(
            out,
            "  vlm clips: {} (gaze {}, proxemic {})",
            b.vlm_clips(),
            b.vlm_clips_gaze,
            b.vlm_clips_proxemic
        );
        let _ = writeln!(
            out,
            "  vlm clip rate vs exhaustive: {}",
            f3(rate(b.vlm_clips(), b.exhaustive_calls))
        );
        let _ = writeln!(out, "  baseline clips: {}", b.baseline_clips);
        let _ = writeln!(
            out,
            "  backend requests: {} (analysis {}, synthesis {}, action {})",
            b.backend.total(),
            b.backend.analysis,
            b.backend.synthesis,
            b.backend.action
        );
        for (name, t) in [
            ("two-stage", &self.timing),
            ("distance-only", &self.baseline_timing),
        ] {
            let _ = writeln!(
                out,
                "timing {name}: interactants {}, on time {}, late {}, missed {}, on-time rate {}",
                t.interactants,
                t.on_time,
                t.late,
                t.missed,
                f3(t.on_time_rate())
            );
        }
        let m = &self.main_interactant;
        let _ = writeln!(
            out,
            "main interactant: {} of {} ({})",
            m.hits,
            m.labelled,
            f3(rate(m.hits, m.labelled))
        );
        let d = &self.decisions;
        let _ = writeln!(
            out,
            "decisions: {} (approach {}, leave {}, probe {})",
            d.total, d.approach, d.leave, d.probe
        );
        let _ = writeln!(
            out,
            "action accuracy: {} of {} ({})",
            d.correct,
            d.scored,
            f3(d.accuracy())
        );
        let _ = writeln!(
            out,
            "deferrals: uncertainty {}, critique {}, backend failures {}, unparseable actions {}",
            d.uncertainty_deferral,
            d.critique_inconclusive,
            d.backend_failures,
            d.unparseable_actions
        );
        out
    }
}
