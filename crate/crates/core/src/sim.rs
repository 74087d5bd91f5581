//! Synthetic episodes: people walking relative to the robot, scripted head
//! turns, ground-truth labels, and matching scripted model responses.
//!
//! Geometry is generated in a person-centred frame in meters (x right, y
//! down, shoulders at y = 0) and projected with a pinhole scale of
//! `FOCAL_PX / distance`. The head is a circle of radius `HEAD_RADIUS_M`;
//! yaw `θ = attention · MAX_YAW` places nose, eyes and ears on it, so
//! `attention = 0` faces the robot and `1` looks away. Turns move attention
//! along a raised-cosine ramp, which gives each turn a single smooth
//! velocity bump in every head signal and exactly zero velocity elsewhere.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, floor, sin};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{window_features, FeatureConfig};
use crate::gate::{GateConfig, GazeClassifier, WindowContext};
use crate::gbdt::{GbdtError, LabeledSet};
use crate::pose::{
    coco, ClipLabel, Episode, EpisodeError, EpisodeLabels, Keypoint, PoseFrame, TrackId,
    TrackLabels, FRAME_RATE, KEYPOINT_COUNT,
};
use crate::vlm::{Action, Intent, MockKey, Stage};
use crate::FeatureVector;

pub const FOCAL_PX: f64 = 600.0;
pub const IMAGE_CENTER: (f64, f64) = (640.0, 360.0);
pub const HEAD_RADIUS_M: f64 = 0.1;
pub const MAX_YAW: f64 = 80.0 * PI / 180.0;
pub const KEYPOINT_CONFIDENCE: f64 = 0.9;
pub const DEFAULT_JITTER: f64 = 0.01;

const HEAD_Y: f64 = -0.25;
/// Shoulder-mid to hip-mid, meters.
const TORSO_M: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("infeasible script for {track}: {reason}")]
    InfeasibleScript { track: String, reason: &'static str },
    #[error("invalid scenario {scenario}: {reason}")]
    InvalidSpec {
        scenario: String,
        reason: &'static str,
    },
    #[error("suite contains no scripted preambles")]
    NoPreambles,
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Wants service: turns toward the robot.
    Interactor,
    /// Notices the robot and keeps doing what they were doing.
    Ignorer,
    /// Far away and uninvolved.
    Bystander,
}

impl Role {
    pub fn expected_action(self) -> Action {
        match self {
            Role::Interactor => Action::Approach,
            Role::Ignorer => Action::Leave,
            Role::Bystander => Action::Probe,
        }
    }

    pub fn intent(self) -> Intent {
        match self {
            Role::Interactor => Intent::Interact,
            Role::Ignorer => Intent::NoIntent,
            Role::Bystander => Intent::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDirection {
    Toward,
    Away,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadTurn {
    pub time_s: f64,
    pub direction: TurnDirection,
    pub duration_s: f64,
    /// Change in attention, as a fraction of the full away-to-frontal range.
    pub amplitude: f64,
}

impl HeadTurn {
    pub fn end_s(&self) -> f64 {
        self.time_s + self.duration_s
    }
}

/// One trajectory sample: distance to the robot at a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub distance_m: f64,
}

/// What the scripted self-critique verifier says about this person.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationScript {
    /// Dissenting claims, if any, are refuted.
    #[default]
    Clean,
    /// The dissenting analyses hallucinate a wave that the verifier refutes.
    RefuteHallucination,
    /// The key glance cannot be confirmed; intention is inconclusive.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBehavior {
    /// How many of the five analyses disagree with the majority.
    pub dissent: usize,
    pub verification: VerificationScript,
}

fn default_attention() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub track_id: TrackId,
    pub role: Role,
    /// Piecewise-linear distance profile, held constant outside its span.
    pub trajectory: Vec<Keyframe>,
    #[serde(default)]
    pub head_script: Vec<HeadTurn>,
    /// Sideways offset from the image centre, meters.
    #[serde(default)]
    pub lateral_m: f64,
    /// Attention before the first turn: 0 faces the robot, 1 looks away.
    #[serde(default = "default_attention")]
    pub initial_attention: f64,
    #[serde(default)]
    pub mock: MockBehavior,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: String,
    pub duration_s: f64,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    /// Keypoint jitter std in normalized (torso-length) units.
    #[serde(default = "default_jitter")]
    pub jitter_std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |reason| SimError::InvalidSpec {
            scenario: self.scenario_id.clone(),
            reason,
        };
        if !(self.duration_s >= 0.0) || !self.duration_s.is_finite() {
            return Err(invalid("duration_s must be finite and >= 0"));
        }
        if !(self.jitter_std >= 0.0) || !self.jitter_std.is_finite() {
            return Err(invalid("jitter_std must be >= 0"));
        }
        for (i, a) in self.actors.iter().enumerate() {
            if self.actors[..i].iter().any(|b| b.track_id == a.track_id) {
                return Err(invalid("duplicate track id"));
            }
            a.validate()?;
        }
        Ok(())
    }
}

impl ActorSpec {
    fn validate(&self) -> Result<(), SimError> {
        let infeasible = |reason| SimError::InfeasibleScript {
            track: self.track_id.to_string(),
            reason,
        };
        if self.trajectory.is_empty() {
            return Err(infeasible("trajectory has no keyframes"));
        }
        if self
            .trajectory
            .iter()
            .any(|k| !(k.distance_m > 0.0) || !k.distance_m.is_finite())
        {
            return Err(infeasible("trajectory distances must be positive"));
        }
        if self.trajectory.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(infeasible("trajectory times must increase"));
        }
        if !(0.0..=1.0).contains(&self.initial_attention) {
            return Err(infeasible("initial_attention must be in [0, 1]"));
        }
        for t in &self.head_script {
            if !(t.duration_s > 0.0) {
                return Err(infeasible("turn durations must be > 0"));
            }
            if !(t.amplitude > 0.0 && t.amplitude <= 1.0) {
                return Err(infeasible("turn amplitude must be in (0, 1]"));
            }
        }
        if self
            .head_script
            .windows(2)
            .any(|w| w[1].time_s < w[0].end_s())
        {
            return Err(infeasible("head turns overlap or are out of order"));
        }
        if self.mock.dissent > 5 {
            return Err(infeasible("dissent must be at most 5"));
        }
        Ok(())
    }

    /// Distance at time `t`.
    pub fn distance_at(&self, t: f64) -> f64 {
        let k = &self.trajectory;
        if t <= k[0].t {
            return k[0].distance_m;
        }
        for w in k.windows(2) {
            if t <= w[1].t {
                let u = (t - w[0].t) / (w[1].t - w[0].t);
                return w[0].distance_m + u * (w[1].distance_m - w[0].distance_m);
            }
        }
        k[k.len() - 1].distance_m
    }

    /// Attention at time `t` after applying every turn that has started.
    pub fn attention_at(&self, t: f64) -> f64 {
        let mut c = self.initial_attention;
        for turn in &self.head_script {
            if t < turn.time_s {
                break;
            }
            let target = match turn.direction {
                TurnDirection::Toward => (c - turn.amplitude).max(0.0),
                TurnDirection::Away => (c + turn.amplitude).min(1.0),
            };
            let u = ((t - turn.time_s) / turn.duration_s).min(1.0);
            c += (target - c) * (1.0 - cos(PI * u)) / 2.0;
        }
        c
    }

    pub fn toward_turns(&self) -> impl Iterator<Item = &HeadTurn> {
        self.head_script
            .iter()
            .filter(|t| t.direction == TurnDirection::Toward)
    }
}

/// Body keypoints in the person frame, meters, COCO order, head excluded.
const BODY: [(usize, f64, f64); 12] = [
    (coco::LEFT_SHOULDER, 0.2, 0.0),
    (coco::RIGHT_SHOULDER, -0.2, 0.0),
    (7, 0.25, 0.28),
    (8, -0.25, 0.28),
    (9, 0.27, 0.52),
    (10, -0.27, 0.52),
    (coco::LEFT_HIP, 0.15, TORSO_M),
    (coco::RIGHT_HIP, -0.15, TORSO_M),
    (13, 0.12, 0.95),
    (14, -0.12, 0.95),
    (15, 0.12, 1.35),
    (16, -0.12, 1.35),
];

/// Head keypoints for yaw `theta`, person frame, meters.
fn head_points(theta: f64) -> [(usize, f64, f64); 5] {
    let r = HEAD_RADIUS_M;
    let eye = 30.0 * PI / 180.0;
    // Slight chin drop as the head turns, so the y signals move too.
    let pitch = 0.02 * (1.0 - cos(theta));
    [
        (coco::NOSE, r * sin(theta), HEAD_Y + 0.03 + pitch),
        (
            coco::LEFT_EYE,
            r * sin(theta + eye),
            HEAD_Y - 0.01 + pitch / 2.0,
        ),
        (
            coco::RIGHT_EYE,
            r * sin(theta - eye),
            HEAD_Y - 0.01 + pitch / 2.0,
        ),
        (coco::LEFT_EAR, r * cos(theta), HEAD_Y),
        (coco::RIGHT_EAR, -r * cos(theta), HEAD_Y),
    ]
}

fn frame_count(duration_s: f64) -> usize {
    floor(duration_s * FRAME_RATE + 1e-9) as usize
}

fn actor_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn actor_frames(spec: &ScenarioSpec, index: usize) -> Vec<PoseFrame> {
    let actor = &spec.actors[index];
    let mut rng = ChaCha8Rng::seed_from_u64(actor_seed(spec.seed, index));
    let noise = Normal::new(0.0, spec.jitter_std.max(0.0)).expect("std validated");
    (0..frame_count(spec.duration_s))
        .map(|i| {
            let t = i as f64 / FRAME_RATE;
            let d = actor.distance_at(t);
            let scale = FOCAL_PX / d;
            let torso_px = TORSO_M * scale;
            let cx = IMAGE_CENTER.0 + actor.lateral_m * scale;
            let cy = IMAGE_CENTER.1;
            let theta = actor.attention_at(t) * MAX_YAW;
            let mut keypoints = [None; KEYPOINT_COUNT];
            for (slot, x, y) in BODY.into_iter().chain(head_points(theta)) {
                let (mut px, mut py) = (cx + x * scale, cy + y * scale);
                if spec.jitter_std > 0.0 {
                    px += noise.sample(&mut rng) * torso_px;
                    py += noise.sample(&mut rng) * torso_px;
                }
                keypoints[slot] = Some(Keypoint::new(px, py, KEYPOINT_CONFIDENCE));
            }
            PoseFrame {
                timestamp: t,
                track_id: actor.track_id.clone(),
                keypoints,
                distance_m: Some(d),
            }
        })
        .collect()
}

fn window_start(t: f64, window_s: f64) -> f64 {
    floor(t / window_s + 1e-9) * window_s
}

/// Ground truth for one actor, using the default gate thresholds.
fn actor_labels(spec: &ScenarioSpec, actor: &ActorSpec, gate: &GateConfig) -> TrackLabels {
    let frames_t: Vec<f64> = (0..frame_count(spec.duration_s))
        .map(|i| i as f64 / FRAME_RATE)
        .collect();
    let window_min = |start: f64| {
        frames_t
            .iter()
            .filter(|&&t| t >= start - 1e-9 && t < start + gate.window_s - 1e-9)
            .map(|&t| actor.distance_at(t))
            .fold(f64::INFINITY, f64::min)
    };
    let mut preamble_times = Vec::new();
    let mut preamble_distances = Vec::new();
    for turn in actor.toward_turns() {
        if turn.time_s >= spec.duration_s {
            continue;
        }
        if window_min(window_start(turn.time_s, gate.window_s)) <= gate.far_exclusion_m {
            preamble_times.push(turn.time_s);
            preamble_distances.push(actor.distance_at(turn.time_s));
        }
    }
    let entry = frames_t
        .iter()
        .copied()
        .find(|&t| actor.distance_at(t) <= gate.personal_zone_m);
    let (expected_gate, escalation) = match (preamble_times.first(), entry) {
        (Some(&t), _) => (
            Some(crate::gate::TriggerKind::GazeShift),
            Some(window_start(t, gate.window_s)),
        ),
        (None, Some(e)) => (Some(crate::gate::TriggerKind::ProxemicEntry), Some(e)),
        (None, None) => (None, None),
    };
    let expected_action = actor.role.expected_action();
    let mut decisions = alloc::vec![ClipLabel {
        start_s: 0.0,
        action: Action::Probe,
    }];
    if let Some(t) = escalation {
        if actor.role != Role::Bystander {
            decisions.push(ClipLabel {
                start_s: t,
                action: expected_action,
            });
        }
    }
    TrackLabels {
        track_id: actor.track_id.clone(),
        interactant: actor.role == Role::Interactor,
        preamble_times,
        preamble_distances,
        expected_gate,
        expected_action,
        decisions,
    }
}

/// Renders a scenario into an episode plus its ground truth.
pub fn synthesize(spec: &ScenarioSpec) -> Result<(Episode, EpisodeLabels), SimError> {
    spec.validate()?;
    let gate = GateConfig::default();
    let mut frames = Vec::new();
    for i in 0..spec.actors.len() {
        frames.extend(actor_frames(spec, i));
    }
    let tracks: Vec<TrackLabels> = spec
        .actors
        .iter()
        .map(|a| actor_labels(spec, a, &gate))
        .collect();
    let main_interactant = spec
        .actors
        .iter()
        .zip(&tracks)
        .filter(|(a, _)| a.role == Role::Interactor)
        .min_by(|(_, x), (_, y)| {
            let first =
                |l: &TrackLabels| l.preamble_times.first().copied().unwrap_or(f64::INFINITY);
            first(x).total_cmp(&first(y))
        })
        .map(|(a, _)| a.track_id.clone());
    let labels = EpisodeLabels {
        main_interactant,
        tracks,
    };
    let episode = Episode::from_frames(spec.scenario_id.clone(), frames, Some(labels.clone()))?;
    Ok((episode, labels))
}

/// Scores a window 1.0 when it contains a labelled preamble start and 0.0
/// otherwise. Stands in for a perfect gaze classifier.
#[derive(Debug, Clone, Default)]
pub struct ScriptOracle {
    preambles: BTreeMap<TrackId, Vec<f64>>,
}

impl ScriptOracle {
    pub fn new(labels: &EpisodeLabels) -> Self {
        Self {
            preambles: labels
                .tracks
                .iter()
                .map(|t| (t.track_id.clone(), t.preamble_times.clone()))
                .collect(),
        }
    }
}

impl GazeClassifier for ScriptOracle {
    fn score(&self, w: &WindowContext<'_>, _features: &FeatureVector) -> Result<f64, GbdtError> {
        let hit = self.preambles.get(w.track_id).is_some_and(|ts| {
            ts.iter()
                .any(|&t| t >= w.start_s - 1e-9 && t < w.end_s - 1e-9)
        });
        Ok(if hit { 1.0 } else { 0.0 })
    }
}

/// One labelled classifier window.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledWindow {
    pub track_id: TrackId,
    pub window_start: f64,
    pub features: FeatureVector,
    pub label: bool,
}

/// Labelled windows from one episode: for every preamble, the window holding
/// the turn start is positive and the window just before it negative.
/// Preambles in the first window have no negative and are skipped, as are
/// pairs whose features cannot be computed. Returns the windows and the
/// number of preambles seen.
pub fn training_windows(
    episode: &Episode,
    labels: &EpisodeLabels,
    features: &FeatureConfig,
    window_s: f64,
) -> (Vec<LabelledWindow>, usize) {
    let mut out = Vec::new();
    let mut preambles = 0;
    for tl in &labels.tracks {
        let Some(track) = episode.track(&tl.track_id) else {
            continue;
        };
        for &t in &tl.preamble_times {
            preambles += 1;
            let start = window_start(t, window_s);
            if start < window_s - 1e-9 {
                log::warn!(
                    "{}/{}: preamble at {t:.2}s is in the first window; skipped",
                    episode.id,
                    tl.track_id
                );
                continue;
            }
            let slice = |s: f64| {
                let lo = track.frames.partition_point(|f| f.timestamp < s - 1e-9);
                let hi = track
                    .frames
                    .partition_point(|f| f.timestamp < s + window_s - 1e-9);
                &track.frames[lo..hi]
            };
            let pos = window_features(&tl.track_id, start, slice(start), features);
            let neg = window_features(
                &tl.track_id,
                start - window_s,
                slice(start - window_s),
                features,
            );
            match (pos, neg) {
                (Ok((_, p)), Ok((_, n))) => {
                    for (window_start, features, label) in
                        [(start, p, true), (start - window_s, n, false)]
                    {
                        out.push(LabelledWindow {
                            track_id: tl.track_id.clone(),
                            window_start,
                            features,
                            label,
                        });
                    }
                }
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!(
                        "{}/{}: preamble at {t:.2}s skipped: {e}",
                        episode.id,
                        tl.track_id
                    );
                }
            }
        }
    }
    (out, preambles)
}

/// [`training_windows`] over a whole suite with default window length.
pub fn build_training_set(
    suite: &[ScenarioSpec],
    features: &FeatureConfig,
) -> Result<LabeledSet, SimError> {
    let window_s = GateConfig::default().window_s;
    let mut rows = Vec::new();
    let mut preambles = 0;
    for spec in suite {
        let (episode, labels) = synthesize(spec)?;
        let (windows, n) = training_windows(&episode, &labels, features, window_s);
        preambles += n;
        rows.extend(windows.into_iter().map(|w| (w.features, w.label)));
    }
    if preambles == 0 {
        return Err(SimError::NoPreambles);
    }
    Ok(LabeledSet::new(rows))
}

/// Mock scenario key for one track of one episode.
pub fn mock_scenario(episode_id: &str, track_id: &TrackId) -> String {
    format!("{episode_id}/{track_id}")
}

struct Claim {
    text: &'static str,
    time: &'static str,
}

const INTERACT_CLAIMS: [Claim; 2] = [
    Claim {
        text: "turns head toward the robot",
        time: "00:02",
    },
    Claim {
        text: "holds gaze on the camera",
        time: "00:03",
    },
];
const NO_INTENT_CLAIMS: [Claim; 2] = [
    Claim {
        text: "keeps head turned away from the robot",
        time: "00:01",
    },
    Claim {
        text: "continues walking without pausing",
        time: "00:02",
    },
];
const INCONCLUSIVE_CLAIMS: [Claim; 1] = [Claim {
    text: "stands still facing sideways",
    time: "00:01",
}];
const WAVE_CLAIM: Claim = Claim {
    text: "waves at the robot",
    time: "00:01",
};

fn claims(intent: Intent) -> &'static [Claim] {
    match intent {
        Intent::Interact => &INTERACT_CLAIMS,
        Intent::NoIntent => &NO_INTENT_CLAIMS,
        Intent::Inconclusive => &INCONCLUSIVE_CLAIMS,
    }
}

pub fn intention_label(intent: Intent) -> &'static str {
    match intent {
        Intent::Interact => "Interact",
        Intent::NoIntent => "No Intent to Interact",
        Intent::Inconclusive => "Inconclusive",
    }
}

/// The intent dissenting analyses argue for.
fn dissent_intent(majority: Intent) -> Intent {
    match majority {
        Intent::Interact => Intent::NoIntent,
        Intent::NoIntent | Intent::Inconclusive => Intent::Interact,
    }
}

fn dissent_claims(majority: Intent) -> &'static [Claim] {
    match dissent_intent(majority) {
        Intent::Interact if majority == Intent::NoIntent => core::slice::from_ref(&WAVE_CLAIM),
        other => claims(other),
    }
}

/// One independent analysis in the requested output format.
pub fn analysis_text(intent: Intent, hallucinated_wave: bool) -> String {
    let (body, showing) = match (intent, hallucinated_wave) {
        (Intent::Interact, true) => (
            "is open, with a wave toward the robot",
            "they want to interact",
        ),
        (Intent::Interact, false) => (
            "is open and oriented toward the robot",
            "they want to interact",
        ),
        (Intent::NoIntent, _) => (
            "stays turned away from the robot",
            "no interest in interacting",
        ),
        (Intent::Inconclusive, _) => ("is neutral", "it is unclear whether they noticed the robot"),
    };
    let mut out =
        format!("Answer: The person's body language {body}, showing {showing}.\nEvidence:");
    let list: &[Claim] = if hallucinated_wave {
        core::slice::from_ref(&WAVE_CLAIM)
    } else {
        claims(intent)
    };
    for c in list {
        out.push_str(&format!(" [{}] {}\n", c.time, c.text));
    }
    out.truncate(out.trim_end().len());
    out
}

/// Decision column of the majority-vote format for `votes` of five.
pub fn vote_decision(votes: usize) -> &'static str {
    match votes {
        v if v >= 4 => "include(4+/5)",
        0 | 1 => "exclude(1/5)",
        2 => "inconclusive (2/5)",
        _ => "inconclusive (3/5)",
    }
}

/// Majority-vote synthesis of five analyses, `dissent` of which disagree
/// with `majority`, following the include / exclude / inconclusive rules.
pub fn majority_vote_text(majority: Intent, dissent: usize) -> String {
    let agree = 5 - dissent.min(5);
    let mut rows: Vec<(&Claim, usize)> = claims(majority).iter().map(|c| (c, agree)).collect();
    if dissent > 0 {
        rows.extend(dissent_claims(majority).iter().map(|c| (c, dissent)));
    }
    let mut out = String::from("vote_summary:\n");
    for (c, v) in &rows {
        out.push_str(&format!(
            "  - behavior: {}\n    votes: {v}/5\n    time: {}\n    decision: {}\n",
            c.text,
            c.time,
            vote_decision(*v)
        ));
    }
    out.push_str("contradictions:\n");
    if dissent > 0 {
        let (a, b) = (claims(majority)[0].text, dissent_claims(majority)[0].text);
        let winner = if agree >= 4 {
            "position_A"
        } else if dissent >= 4 {
            "position_B"
        } else {
            "Inconclusive"
        };
        out.push_str(&format!(
            "  - issue: whether the person {b}\n    position_A: \"{a}\" (votes: {agree}/5)\n    position_B: \"{b}\" (votes: {dissent}/5)\n    winner: {winner}\n"
        ));
    }
    out.push_str("Final log (Majority Vote):\n");
    for (c, v) in &rows {
        if *v >= 4 {
            out.push_str(&format!("  - [{}] {} (votes: {v}/5)\n", c.time, c.text));
        } else if *v >= 2 {
            out.push_str(&format!(
                "  - [{}] {} (inconclusive, {v} vs {})\n",
                c.time,
                c.text,
                5 - v
            ));
        }
    }
    let (overall, votes) = if agree >= 4 {
        (majority, agree)
    } else if dissent >= 4 {
        (dissent_intent(majority), dissent)
    } else {
        (Intent::Inconclusive, agree.max(dissent))
    };
    out.push_str(&format!(
        "Overall intention: [{}] (votes: {votes}/5)",
        intention_label(overall)
    ));
    out
}

fn contradiction_text(majority: Intent, behavior: &MockBehavior) -> String {
    if behavior.dissent == 0 && behavior.verification != VerificationScript::Inconclusive {
        return "contradictions: []".into();
    }
    let main = &claims(majority)[0];
    let other = if behavior.dissent > 0 {
        dissent_claims(majority)[0].text
    } else {
        "does not look at the robot"
    };
    format!(
        "contradictions:\n - issue: whether the person {other}\n   candidates:\n   - analysis: 1\n     quote: \"{}\"\n   - analysis: 5\n     quote: \"{other}\"",
        main.text
    )
}

fn verification_text(majority: Intent, behavior: &MockBehavior) -> String {
    let main = &claims(majority)[0];
    let mut out = String::new();
    let final_intent = match behavior.verification {
        VerificationScript::Inconclusive => {
            out.push_str(&format!(
                "contradictions:\n - issue: whether the person glances toward the robot\n   candidates:\n   - analysis: 1\n     quote: \"glances toward the robot\"\n     video_check: inconclusive\n     indicators: [head partly occluded]\n   - analysis: 5\n     quote: \"{}\"\n     video_check: inconclusive\n     indicators: [motion blur]\n - resolution to the issue: inconclusive, the glance is too brief to confirm.\n",
                main.text
            ));
            Intent::Inconclusive
        }
        _ if behavior.dissent == 0 => {
            out.push_str("contradictions: []\n");
            majority
        }
        _ => {
            let other = dissent_claims(majority)[0].text;
            out.push_str(&format!(
                "contradictions:\n - issue: whether the person {other}\n   candidates:\n   - analysis: 1\n     quote: \"{}\"\n     video_check: supported\n     indicators: [{} at {}]\n   - analysis: 5\n     quote: \"{other}\"\n     video_check: refuted\n     indicators: [not visible]\n - resolution to the issue: the claim that the person {other} is not visible in the video.\n",
                main.text, main.text, main.time
            ));
            majority
        }
    };
    out.push_str("Final log (Verification):\n");
    for c in claims(majority) {
        out.push_str(&format!(" - [{}] {}\n", c.time, c.text));
    }
    out.push_str(&format!(
        "Overall intention: [{}] (rationale: {})",
        intention_label(final_intent),
        match final_intent {
            Intent::Interact => "the person turns toward the robot and holds gaze",
            Intent::NoIntent => "the person keeps looking away and keeps walking",
            Intent::Inconclusive => "the key glance cannot be confirmed",
        }
    ));
    out
}

pub fn action_text(intent: Intent) -> &'static str {
    match intent {
        Intent::Interact => {
            "Approach to interact. The person turned toward the robot and held eye contact."
        }
        Intent::NoIntent => {
            "Leave, do not interact. The person kept looking away and continued walking."
        }
        Intent::Inconclusive => "Inconclusive, Keep probing. The cues are too weak to decide.",
    }
}

/// Scripted responses for every track of a scenario, keyed by
/// [`mock_scenario`]. The last `dissent` analyses of each track disagree.
pub fn script_mock_backend(spec: &ScenarioSpec) -> Vec<(MockKey, String)> {
    let mut out = Vec::new();
    for actor in &spec.actors {
        let scenario = mock_scenario(&spec.scenario_id, &actor.track_id);
        let key = |stage, sample| MockKey {
            scenario: scenario.clone(),
            kind: None,
            stage,
            sample,
            attempt: 0,
        };
        let majority = actor.role.intent();
        let b = &actor.mock;
        let dissent = b.dissent.min(5);
        for i in 0..5 {
            let text = if i >= 5 - dissent {
                let wave = majority == Intent::NoIntent
                    || b.verification == VerificationScript::RefuteHallucination;
                let d = dissent_intent(majority);
                analysis_text(d, wave && d == Intent::Interact)
            } else {
                analysis_text(majority, false)
            };
            out.push((key(Stage::Independent, Some(i)), text));
        }
        out.push((
            key(Stage::MajorityVote, None),
            majority_vote_text(majority, dissent),
        ));
        out.push((
            key(Stage::Contradiction, None),
            contradiction_text(majority, b),
        ));
        out.push((key(Stage::Verify, None), verification_text(majority, b)));
        let final_intent = if b.verification == VerificationScript::Inconclusive {
            Intent::Inconclusive
        } else {
            majority
        };
        out.push((key(Stage::Action, None), action_text(final_intent).into()));
    }
    out
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    Normal::new(mean, std).expect("positive std").sample(rng)
}

/// Places a turn of `duration_s` fully inside window `w` (2 s windows).
fn turn_in_window(rng: &mut ChaCha8Rng, w: usize, duration_s: f64) -> f64 {
    let slack = (2.0 - duration_s - 0.2).max(0.0);
    2.0 * w as f64 + 0.1 + rng.random::<f64>() * slack
}

/// An interactor who turns toward the robot at `gaze_m` while the robot
/// closes in at `speed` m/s, stopping at `stop_m`.
fn interactor(
    rng: &mut ChaCha8Rng,
    id: &str,
    window: usize,
    gaze_m: f64,
    speed: f64,
    stop_m: f64,
) -> ActorSpec {
    let turn_duration = rng.random_range(0.4..1.0);
    let start = turn_in_window(rng, window, turn_duration);
    let stop_m = stop_m.min(gaze_m);
    let mut trajectory = alloc::vec![
        Keyframe {
            t: 0.0,
            distance_m: gaze_m + speed * start,
        },
        Keyframe {
            t: start,
            distance_m: gaze_m,
        },
    ];
    if gaze_m > stop_m {
        trajectory.push(Keyframe {
            t: start + (gaze_m - stop_m) / speed,
            distance_m: stop_m,
        });
    }
    ActorSpec {
        track_id: id.into(),
        role: Role::Interactor,
        trajectory,
        head_script: alloc::vec![HeadTurn {
            time_s: start,
            direction: TurnDirection::Toward,
            duration_s: turn_duration,
            amplitude: rng.random_range(0.6..1.0),
        }],
        lateral_m: rng.random_range(-0.5..0.5),
        initial_attention: rng.random_range(0.85..1.0),
        mock: MockBehavior::default(),
    }
}

fn bystander(rng: &mut ChaCha8Rng, id: &str) -> ActorSpec {
    ActorSpec {
        track_id: id.into(),
        role: Role::Bystander,
        trajectory: alloc::vec![Keyframe {
            t: 0.0,
            distance_m: rng.random_range(5.0..7.0),
        }],
        head_script: Vec::new(),
        lateral_m: rng.random_range(-1.5..1.5),
        initial_attention: 1.0,
        mock: MockBehavior::default(),
    }
}

/// Draws a gaze-preamble distance: normal around 1.2 m (sd 0.35), clamped
/// to `[0.5, 3.5]`.
pub fn gaze_distance(rng: &mut ChaCha8Rng) -> f64 {
    normal(rng, 1.2, 0.35).clamp(0.5, 3.5)
}

/// `n` single-interactor scenarios, one scripted toward-turn each, placed
/// fully inside one of windows 1 to 4. Used for classifier training and
/// generator calibration.
pub fn gaze_suite(n: usize, seed: u64) -> Vec<ScenarioSpec> {
    let mut rng = rng_for(seed);
    (0..n)
        .map(|i| {
            let window = rng.random_range(1..=4usize);
            let duration_s = 2.0 * (window + 2) as f64;
            let gaze_m = gaze_distance(&mut rng);
            let speed = rng.random_range(0.2..0.4);
            let actor = interactor(&mut rng, "p1", window, gaze_m, speed, 0.6);
            ScenarioSpec {
                scenario_id: format!("gaze-{i:04}"),
                duration_s,
                actors: alloc::vec![actor],
                jitter_std: DEFAULT_JITTER,
                seed: rng.random(),
            }
        })
        .collect()
}

/// The 30-scenario benchmark: 20-second episodes, each with a bystander
/// beyond 4 m and one engaged person. Scenario families, by `i % 5`:
///
/// * 0, 1: interactor gazes near the personal-zone boundary;
/// * 2: interactor gazes early (2.5–3.5 m), personal-zone entry 4+ s later;
/// * 3: ignorer approached to 1.0 m without turning;
/// * 4: interactor with dissenting or disputed analyses.
pub fn benchmark_suite(seed: u64) -> Vec<ScenarioSpec> {
    let mut rng = rng_for(seed);
    let duration_s = 20.0;
    (0..30)
        .map(|i| {
            let person = match i % 5 {
                0 | 1 | 4 => {
                    let window = rng.random_range(2..=6usize);
                    let gaze_m = normal(&mut rng, 1.2, 0.35).clamp(0.8, 2.5);
                    let mut a = interactor(&mut rng, "p1", window, gaze_m, 0.3, 0.8);
                    if i % 5 == 4 {
                        a.mock = match (i / 5) % 4 {
                            0 => MockBehavior {
                                dissent: 1,
                                verification: VerificationScript::RefuteHallucination,
                            },
                            1 => MockBehavior {
                                dissent: 2,
                                verification: VerificationScript::Clean,
                            },
                            2 => MockBehavior {
                                dissent: 0,
                                verification: VerificationScript::Inconclusive,
                            },
                            _ => MockBehavior {
                                dissent: 1,
                                verification: VerificationScript::Clean,
                            },
                        };
                    }
                    a
                }
                2 => {
                    let window = rng.random_range(2..=3usize);
                    let gaze_m = rng.random_range(2.5..3.5);
                    interactor(&mut rng, "p1", window, gaze_m, 0.3, 0.8)
                }
                _ => {
                    let arrive = rng.random_range(9.0..14.0);
                    ActorSpec {
                        track_id: "p1".into(),
                        role: Role::Ignorer,
                        trajectory: alloc::vec![
                            Keyframe {
                                t: 0.0,
                                distance_m: rng.random_range(3.0..3.8),
                            },
                            Keyframe {
                                t: arrive,
                                distance_m: 1.0,
                            },
                        ],
                        head_script: Vec::new(),
                        lateral_m: rng.random_range(-0.5..0.5),
                        initial_attention: rng.random_range(0.85..1.0),
                        mock: MockBehavior::default(),
                    }
                }
            };
            ScenarioSpec {
                scenario_id: format!("bench-{i:02}"),
                duration_s,
                actors: alloc::vec![person, bystander(&mut rng, "b1")],
                jitter_std: DEFAULT_JITTER,
                seed: rng.random(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Signal;
    use crate::gate::{run_stage_one, TriggerKind, WindowDisposition};
    use crate::vlm::{parse_analysis, parse_verification};
    use alloc::vec;

    fn turn_at(t: f64) -> HeadTurn {
        HeadTurn {
            time_s: t,
            direction: TurnDirection::Toward,
            duration_s: 0.8,
            amplitude: 0.9,
        }
    }

    fn one_interactor(jitter: f64) -> ScenarioSpec {
        ScenarioSpec {
            scenario_id: "s".into(),
            duration_s: 12.0,
            actors: vec![ActorSpec {
                track_id: "p1".into(),
                role: Role::Interactor,
                trajectory: vec![Keyframe {
                    t: 0.0,
                    distance_m: 1.2,
                }],
                head_script: vec![turn_at(6.0)],
                lateral_m: 0.0,
                initial_attention: 1.0,
                mock: MockBehavior::default(),
            }],
            jitter_std: jitter,
            seed: 3,
        }
    }

    #[test]
    fn scripted_turn_becomes_gaze_preamble() {
        let (ep, labels) = synthesize(&one_interactor(0.01)).unwrap();
        assert_eq!(ep.frame_count(), 180);
        let t = &labels.tracks[0];
        assert_eq!(t.preamble_times, vec![6.0]);
        assert_eq!(t.expected_gate, Some(TriggerKind::GazeShift));
        assert_eq!(t.expected_action, Action::Approach);
        assert_eq!(labels.main_interactant, Some("p1".into()));
    }

    #[test]
    fn ignorer_in_personal_zone_expects_proxemic_leave() {
        let spec = ScenarioSpec {
            scenario_id: "s".into(),
            duration_s: 10.0,
            actors: vec![ActorSpec {
                track_id: "p1".into(),
                role: Role::Ignorer,
                trajectory: vec![
                    Keyframe {
                        t: 0.0,
                        distance_m: 3.0,
                    },
                    Keyframe {
                        t: 8.0,
                        distance_m: 1.0,
                    },
                ],
                head_script: vec![],
                lateral_m: 0.0,
                initial_attention: 1.0,
                mock: MockBehavior::default(),
            }],
            jitter_std: 0.0,
            seed: 0,
        };
        let (_, labels) = synthesize(&spec).unwrap();
        assert_eq!(
            labels.tracks[0].expected_gate,
            Some(TriggerKind::ProxemicEntry)
        );
        assert_eq!(labels.tracks[0].expected_action, Action::Leave);
    }

    #[test]
    fn zero_actors() {
        let spec = ScenarioSpec {
            scenario_id: "s".into(),
            duration_s: 10.0,
            actors: vec![],
            jitter_std: 0.01,
            seed: 0,
        };
        let (ep, labels) = synthesize(&spec).unwrap();
        assert!(ep.tracks.is_empty());
        assert!(labels.tracks.is_empty() && labels.main_interactant.is_none());
    }

    #[test]
    fn overlapping_turns_are_infeasible() {
        let mut spec = one_interactor(0.0);
        spec.actors[0].head_script = vec![turn_at(6.0), turn_at(6.5)];
        assert!(matches!(
            synthesize(&spec),
            Err(SimError::InfeasibleScript { .. })
        ));
    }

    #[test]
    fn noise_free_motion_only_inside_turns() {
        let (ep, _) = synthesize(&one_interactor(0.0)).unwrap();
        let track = &ep.tracks[0];
        let cfg = FeatureConfig::default();
        for start in [0.0, 2.0, 4.0, 8.0, 10.0] {
            let frames: Vec<PoseFrame> = track
                .frames
                .iter()
                .filter(|f| f.timestamp >= start - 1e-9 && f.timestamp < start + 2.0 - 1e-9)
                .cloned()
                .collect();
            let (w, _) = window_features(&track.id, start, &frames, &cfg).unwrap();
            for v in w.velocities().iter().flatten() {
                assert!(v.abs() < 1e-12, "window {start}: velocity {v}");
            }
        }
        let frames: Vec<PoseFrame> = track
            .frames
            .iter()
            .filter(|f| (6.0..8.0).contains(&f.timestamp))
            .cloned()
            .collect();
        let (_, fv) = window_features(&track.id, 6.0, &frames, &cfg).unwrap();
        assert!(
            fv.get(Signal::LeftEarNoseX, crate::features::Stat::Max)
                .abs()
                > 0.01
        );
    }

    #[test]
    fn deterministic_for_seed() {
        let a = synthesize(&one_interactor(0.01)).unwrap();
        let b = synthesize(&one_interactor(0.01)).unwrap();
        assert_eq!(a, b);
        let mut other = one_interactor(0.01);
        other.seed = 4;
        assert_ne!(a.0, synthesize(&other).unwrap().0);
    }

    #[test]
    fn oracle_recovers_preamble_windows() {
        for spec in benchmark_suite(7).iter().chain(gaze_suite(20, 9).iter()) {
            let (ep, labels) = synthesize(spec).unwrap();
            let r = run_stage_one(&ep, &ScriptOracle::new(&labels), &GateConfig::default());
            for tl in &labels.tracks {
                let mut got: Vec<f64> = r
                    .timeline
                    .iter()
                    .filter(|w| w.track_id == tl.track_id)
                    .filter(|w| w.disposition == WindowDisposition::Trigger(TriggerKind::GazeShift))
                    .map(|w| w.window_start)
                    .collect();
                got.dedup();
                let want: Vec<f64> = tl
                    .preamble_times
                    .iter()
                    .map(|&t| window_start(t, 2.0))
                    .collect();
                assert_eq!(got, want, "{} {}", spec.scenario_id, tl.track_id);
            }
        }
    }

    #[test]
    fn training_pairs() {
        let suite = gaze_suite(20, 1);
        let set = build_training_set(&suite, &FeatureConfig::default()).unwrap();
        assert_eq!(set.len(), 40);
        assert_eq!(set.positives(), 20);
        assert_eq!(
            set,
            build_training_set(&suite, &FeatureConfig::default()).unwrap()
        );

        let mut first = one_interactor(0.01);
        first.actors[0].head_script = vec![turn_at(0.5)];
        assert_eq!(
            build_training_set(&[first], &FeatureConfig::default())
                .unwrap()
                .len(),
            0
        );

        let mut none = one_interactor(0.01);
        none.actors[0].head_script.clear();
        assert_eq!(
            build_training_set(&[none], &FeatureConfig::default()),
            Err(SimError::NoPreambles)
        );
    }

    #[test]
    fn scripted_texts_parse_as_intended() {
        for intent in Intent::ALL {
            assert_eq!(
                parse_analysis(&analysis_text(intent, false), 6.0).intent,
                Some(intent)
            );
        }
        assert_eq!(
            parse_analysis(&analysis_text(Intent::Interact, true), 6.0).intent,
            Some(Intent::Interact)
        );
        assert_eq!(
            parse_verification(&majority_vote_text(Intent::Interact, 1)).intent,
            Some(Intent::Interact)
        );
        assert_eq!(
            parse_verification(&majority_vote_text(Intent::NoIntent, 2)).intent,
            Some(Intent::Inconclusive)
        );
        let v = verification_text(
            Intent::NoIntent,
            &MockBehavior {
                dissent: 1,
                verification: VerificationScript::RefuteHallucination,
            },
        );
        let v = parse_verification(&v);
        assert_eq!(v.intent, Some(Intent::NoIntent));
        assert!(!v.issues[0].unresolved());
    }
}
