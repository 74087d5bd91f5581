//! Stage I gate: decides per track and per 2-second window whether the
//! expensive model should see a clip.
//!
//! Rules, in order, for one window of one track:
//!
//! 1. every known distance beyond `far_exclusion_m` → excluded, the classifier
//!    does not run;
//! 2. the gaze classifier fires → gaze trigger at the window start;
//! 3. the track crosses into the personal zone inside the window, and no gaze
//!    trigger for this track is younger than one window → proxemic trigger at
//!    the crossing;
//! 4. otherwise → no trigger, the robot keeps probing.
//!
//! Triggers are then chain-merged per track, padded into clips and given an
//! overlay plan for set-of-marks prompting.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{window_features, FeatureConfig, FeatureVector};
use crate::gbdt::{GbdtError, GbdtModel};
use crate::pose::{Episode, PoseFrame, Track, TrackId};

const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("invalid gate config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TriggerKind {
    GazeShift,
    ProxemicEntry,
}

impl TriggerKind {
    pub fn name(self) -> &'static str {
        match self {
            TriggerKind::GazeShift => "gaze",
            TriggerKind::ProxemicEntry => "proxemic",
        }
    }

    pub fn base_color(self) -> OverlayColor {
        match self {
            TriggerKind::GazeShift => OverlayColor::Blue,
            TriggerKind::ProxemicEntry => OverlayColor::Orange,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub far_exclusion_m: f64,
    pub personal_zone_m: f64,
    pub window_s: f64,
    pub stride_s: f64,
    pub group_merge_s: f64,
    pub gaze_pad_s: f64,
    pub proxemic_tail_s: f64,
    /// Overlay boxes are keypoint extrema grown by this fraction per side.
    pub overlay_pad_frac: f64,
    pub features: FeatureConfig,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            far_exclusion_m: 4.0,
            personal_zone_m: 1.2,
            window_s: 2.0,
            stride_s: 2.0,
            group_merge_s: 1.0,
            gaze_pad_s: 2.0,
            proxemic_tail_s: 2.0,
            overlay_pad_frac: 0.1,
            features: FeatureConfig::default(),
        }
    }
}

impl GateConfig {
    /// Every violated constraint, in field order.
    pub fn problems(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.personal_zone_m > 0.0 && self.personal_zone_m < self.far_exclusion_m) {
            out.push("need 0 < personal_zone_m < far_exclusion_m");
        }
        for (v, what) in [
            (self.window_s, "window_s must be > 0"),
            (self.stride_s, "stride_s must be > 0"),
            (self.group_merge_s, "group_merge_s must be > 0"),
            (self.gaze_pad_s, "gaze_pad_s must be > 0"),
            (self.proxemic_tail_s, "proxemic_tail_s must be > 0"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(what);
            }
        }
        if !(self.overlay_pad_frac >= 0.0) {
            out.push("overlay_pad_frac must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.features.confidence_floor) {
            out.push("features.confidence_floor must be in [0, 1]");
        }
        out
    }

    pub fn validate(&self) -> Result<(), GateError> {
        match self.problems().first() {
            Some(p) => Err(GateError::InvalidConfig(p)),
            None => Ok(()),
        }
    }
}

/// Where in the episode a window sits, for classifiers that need it.
#[derive(Debug, Clone, Copy)]
pub struct WindowContext<'a> {
    pub track_id: &'a TrackId,
    pub start_s: f64,
    pub end_s: f64,
}

/// Scores one window's features; implemented by [`GbdtModel`].
pub trait GazeClassifier {
    fn score(&self, window: &WindowContext<'_>, features: &FeatureVector)
        -> Result<f64, GbdtError>;

    fn threshold(&self) -> f64 {
        0.5
    }
}

impl GazeClassifier for GbdtModel {
    fn score(
        &self,
        _window: &WindowContext<'_>,
        features: &FeatureVector,
    ) -> Result<f64, GbdtError> {
        self.predict_proba(features.as_slice())
    }

    fn threshold(&self) -> f64 {
        GbdtModel::threshold(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayColor {
    Blue,
    Orange,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayEntry {
    pub frame_time: f64,
    /// `[x0, y0, x1, y1]` in pixels.
    pub bbox: [f64; 4],
    pub color: OverlayColor,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlayPlan {
    pub entries: Vec<OverlayEntry>,
}

impl OverlayPlan {
    pub fn green_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries
            .iter()
            .filter(|e| e.color == OverlayColor::Green)
            .map(|e| e.frame_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipSpan {
    pub start_s: f64,
    pub end_s: f64,
}

impl ClipSpan {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s - TIME_EPS && t <= self.end_s + TIME_EPS
    }
}

/// A detected preamble with its clip and overlay plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub track_id: TrackId,
    pub kind: TriggerKind,
    pub trigger_time: f64,
    pub clip: ClipSpan,
    pub overlay: OverlayPlan,
    /// Classifier probability; gaze triggers only.
    pub score: Option<f64>,
}

impl TriggerEvent {
    /// Builds an event with its padded clip clamped to `[0, episode_end]`.
    pub fn new(
        track_id: TrackId,
        kind: TriggerKind,
        trigger_time: f64,
        score: Option<f64>,
        config: &GateConfig,
        episode_end: f64,
    ) -> Self {
        let (start, end) = match kind {
            TriggerKind::GazeShift => (
                trigger_time - config.gaze_pad_s,
                trigger_time + config.window_s + config.gaze_pad_s,
            ),
            TriggerKind::ProxemicEntry => (trigger_time, trigger_time + config.proxemic_tail_s),
        };
        Self {
            track_id,
            kind,
            trigger_time,
            clip: ClipSpan {
                start_s: start.max(0.0),
                end_s: end.min(episode_end).max(start.max(0.0)),
            },
            overlay: OverlayPlan::default(),
            score,
        }
    }
}

/// Frames of one track inside one window.
#[derive(Debug, Clone, Copy)]
pub struct TrackWindow<'a> {
    pub track_id: &'a TrackId,
    pub start_s: f64,
    pub end_s: f64,
    pub frames: &'a [PoseFrame],
    /// Last known distance before the window starts.
    pub prev_distance: Option<f64>,
}

impl TrackWindow<'_> {
    pub fn min_distance(&self) -> Option<f64> {
        self.frames
            .iter()
            .filter_map(|f| f.distance_m)
            .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.min(d))))
    }

    /// Time of the first crossing to `<= zone` within the window. A track
    /// whose first known distance is already inside counts as entering there.
    pub fn zone_entry(&self, zone: f64) -> Option<f64> {
        let mut last = self.prev_distance;
        for f in self.frames {
            if let Some(d) = f.distance_m {
                if d <= zone && last.is_none_or(|p| p > zone) {
                    return Some(f.timestamp);
                }
                last = Some(d);
            }
        }
        None
    }
}

/// Splits a track into windows on the `stride_s` grid starting at 0. Windows
/// in which the track has no frames are skipped.
pub fn track_windows<'a>(
    track: &'a Track,
    config: &GateConfig,
    episode_end: f64,
) -> Vec<TrackWindow<'a>> {
    let mut out = Vec::new();
    let frames = &track.frames;
    let mut k = 0usize;
    loop {
        let start = k as f64 * config.stride_s;
        if start > episode_end + TIME_EPS {
            break;
        }
        let end = start + config.window_s;
        let lo = frames.partition_point(|f| f.timestamp < start - TIME_EPS);
        let hi = frames.partition_point(|f| f.timestamp < end - TIME_EPS);
        if hi > lo {
            let prev_distance = frames[..lo].iter().rev().find_map(|f| f.distance_m);
            out.push(TrackWindow {
                track_id: &track.id,
                start_s: start,
                end_s: end,
                frames: &frames[lo..hi],
                prev_distance,
            });
        }
        k += 1;
    }
    out
}

/// Gaze triggers seen so far for one track.
#[derive(Debug, Clone, Copy, Default)]
pub struct GateHistory {
    pub last_gaze: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateVerdict {
    Gaze { time: f64, score: f64 },
    Proxemic { time: f64 },
    NoTrigger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub verdict: GateVerdict,
    pub excluded_far: bool,
    /// Classifier probability when it ran.
    pub score: Option<f64>,
    /// Why features or scoring failed, if they did.
    pub diagnostic: Option<String>,
}

impl WindowOutcome {
    pub fn classifier_ran(&self) -> bool {
        self.score.is_some()
    }
}

/// Applies the gate rules to one window.
///
/// Feature or scoring failures never abort the stream: they are logged, the
/// classifier counts as not firing, and the proxemic rule still applies.
pub fn gate_window(
    window: &TrackWindow<'_>,
    classifier: &dyn GazeClassifier,
    config: &GateConfig,
    history: &GateHistory,
) -> WindowOutcome {
    if window
        .min_distance()
        .is_some_and(|d| d > config.far_exclusion_m)
    {
        return WindowOutcome {
            verdict: GateVerdict::NoTrigger,
            excluded_far: true,
            score: None,
            diagnostic: None,
        };
    }

    let mut diagnostic = None;
    let mut score = None;
    match window_features(
        window.track_id,
        window.start_s,
        window.frames,
        &config.features,
    ) {
        Ok((_, features)) => {
            let ctx = WindowContext {
                track_id: window.track_id,
                start_s: window.start_s,
                end_s: window.end_s,
            };
            match classifier.score(&ctx, &features) {
                Ok(p) => score = Some(p),
                Err(e) => diagnostic = Some(e.to_string()),
            }
        }
        Err(e) => diagnostic = Some(e.to_string()),
    }
    if let Some(d) = &diagnostic {
        log::debug!(
            "track {} window {:.1}s: {d}",
            window.track_id,
            window.start_s
        );
    }

    if let Some(p) = score.filter(|&p| p >= classifier.threshold()) {
        return WindowOutcome {
            verdict: GateVerdict::Gaze {
                time: window.start_s,
                score: p,
            },
            excluded_far: false,
            score,
            diagnostic,
        };
    }

    let verdict = match window.zone_entry(config.personal_zone_m) {
        Some(t) if history.last_gaze.is_none_or(|g| t - g >= config.window_s) => {
            GateVerdict::Proxemic { time: t }
        }
        _ => GateVerdict::NoTrigger,
    };
    WindowOutcome {
        verdict,
        excluded_far: false,
        score,
        diagnostic,
    }
}

/// Chain-merges consecutive same-track events whose trigger times are within
/// `group_merge_s` of the previous event. The merged event keeps the earliest
/// trigger time and the union of the clips; gaze dominates proxemic.
pub fn group_triggers(events: &[TriggerEvent], config: &GateConfig) -> Vec<TriggerEvent> {
    let mut out: Vec<TriggerEvent> = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for e in events {
        let merge = out.last().is_some_and(|m| {
            m.track_id == e.track_id
                && e.trigger_time - last_time <= config.group_merge_s + TIME_EPS
        });
        last_time = e.trigger_time;
        if !merge {
            out.push(e.clone());
            continue;
        }
        let m = out.last_mut().unwrap();
        m.clip.start_s = m.clip.start_s.min(e.clip.start_s);
        m.clip.end_s = m.clip.end_s.max(e.clip.end_s);
        if e.kind == TriggerKind::GazeShift {
            m.kind = TriggerKind::GazeShift;
        }
        m.score = match (m.score, e.score) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        for entry in &e.overlay.entries {
            match m
                .overlay
                .entries
                .iter_mut()
                .find(|x| (x.frame_time - entry.frame_time).abs() < TIME_EPS)
            {
                Some(x) if entry.color == OverlayColor::Green => x.color = OverlayColor::Green,
                Some(_) => {}
                None => m.overlay.entries.push(*entry),
            }
        }
        let base = m.kind.base_color();
        for x in &mut m.overlay.entries {
            if x.color != OverlayColor::Green {
                x.color = base;
            }
        }
        m.overlay
            .entries
            .sort_by(|a, b| a.frame_time.total_cmp(&b.frame_time));
    }
    out
}

/// Per-frame boxes for `event.track_id` inside the clip. Frames inside a
/// window where the classifier fired are green; the rest use the trigger
/// kind's base color.
pub fn build_overlay(
    track: &Track,
    clip: ClipSpan,
    kind: TriggerKind,
    fired_windows: &[(f64, f64)],
    config: &GateConfig,
) -> OverlayPlan {
    let mut entries = Vec::new();
    for f in &track.frames {
        if !clip.contains(f.timestamp) {
            continue;
        }
        let Some([x0, y0, x1, y1]) = f.keypoint_bounds(config.features.confidence_floor) else {
            continue;
        };
        let (px, py) = (
            (x1 - x0) * config.overlay_pad_frac,
            (y1 - y0) * config.overlay_pad_frac,
        );
        let green = fired_windows
            .iter()
            .any(|&(s, e)| f.timestamp >= s - TIME_EPS && f.timestamp < e - TIME_EPS);
        entries.push(OverlayEntry {
            frame_time: f.timestamp,
            bbox: [x0 - px, y0 - py, x1 + px, y1 + py],
            color: if green {
                OverlayColor::Green
            } else {
                kind.base_color()
            },
        });
    }
    OverlayPlan { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowDisposition {
    Trigger(TriggerKind),
    ProbeDefault,
    ExcludedFar,
}

/// How one window of one track was handled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub track_id: TrackId,
    pub window_start: f64,
    pub disposition: WindowDisposition,
    pub score: Option<f64>,
}

/// Stage I accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOneBudget {
    pub windows: usize,
    pub excluded_far: usize,
    pub probe_default: usize,
    pub classifier_runs: usize,
    pub gaze_windows: usize,
    pub proxemic_windows: usize,
    /// Events after grouping, i.e. clips sent to the model.
    pub gaze_events: usize,
    pub proxemic_events: usize,
}

impl StageOneBudget {
    pub fn vlm_calls(&self) -> usize {
        self.gaze_events + self.proxemic_events
    }

    pub fn add(&mut self, o: &StageOneBudget) {
        self.windows += o.windows;
        self.excluded_far += o.excluded_far;
        self.probe_default += o.probe_default;
        self.classifier_runs += o.classifier_runs;
        self.gaze_windows += o.gaze_windows;
        self.proxemic_windows += o.proxemic_windows;
        self.gaze_events += o.gaze_events;
        self.proxemic_events += o.proxemic_events;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOneResult {
    /// Grouped events, ordered by `(track_id, trigger_time)`.
    pub events: Vec<TriggerEvent>,
    /// One record per (track, window).
    pub timeline: Vec<WindowRecord>,
    pub budget: StageOneBudget,
}

/// Runs the gate over every window of every track in the episode.
pub fn run_stage_one(
    episode: &Episode,
    classifier: &dyn GazeClassifier,
    config: &GateConfig,
) -> StageOneResult {
    let end = episode.end_s();
    let mut result = StageOneResult::default();
    for track in &episode.tracks {
        let mut history = GateHistory::default();
        let mut raw = Vec::new();
        let mut fired = Vec::new();
        for w in track_windows(track, config, end) {
            let outcome = gate_window(&w, classifier, config, &history);
            let b = &mut result.budget;
            b.windows += 1;
            if outcome.classifier_ran() {
                b.classifier_runs += 1;
            }
            if outcome.score.is_some_and(|p| p >= classifier.threshold()) {
                fired.push((w.start_s, w.end_s));
            }
            let disposition = match outcome.verdict {
                GateVerdict::Gaze { time, score } => {
                    b.gaze_windows += 1;
                    history.last_gaze = Some(time);
                    raw.push(TriggerEvent::new(
                        track.id.clone(),
                        TriggerKind::GazeShift,
                        time,
                        Some(score),
                        config,
                        end,
                    ));
                    WindowDisposition::Trigger(TriggerKind::GazeShift)
                }
                GateVerdict::Proxemic { time } => {
                    b.proxemic_windows += 1;
                    raw.push(TriggerEvent::new(
                        track.id.clone(),
                        TriggerKind::ProxemicEntry,
                        time,
                        None,
                        config,
                        end,
                    ));
                    WindowDisposition::Trigger(TriggerKind::ProxemicEntry)
                }
                GateVerdict::NoTrigger if outcome.excluded_far => {
                    b.excluded_far += 1;
                    WindowDisposition::ExcludedFar
                }
                GateVerdict::NoTrigger => {
                    b.probe_default += 1;
                    WindowDisposition::ProbeDefault
                }
            };
            result.timeline.push(WindowRecord {
                track_id: track.id.clone(),
                window_start: w.start_s,
                disposition,
                score: outcome.score,
            });
        }
        raw.sort_by(|a, b| a.trigger_time.total_cmp(&b.trigger_time));
        for mut e in group_triggers(&raw, config) {
            e.overlay = build_overlay(track, e.clip, e.kind, &fired, config);
            match e.kind {
                TriggerKind::GazeShift => result.budget.gaze_events += 1,
                TriggerKind::ProxemicEntry => result.budget.proxemic_events += 1,
            }
            result.events.push(e);
        }
    }
    result
}
