//! Tracked poses, episodes, pose normalization and depth-based distance.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::TriggerKind;
use crate::vlm::Action;

/// Number of keypoint slots in the COCO-17 layout.
pub const KEYPOINT_COUNT: usize = 17;

/// Nominal camera frame rate.
pub const FRAME_RATE: f64 = 15.0;

/// Nominal spacing between consecutive frames, in seconds.
pub const FRAME_DT: f64 = 1.0 / FRAME_RATE;

/// Accepted deviation from [`FRAME_DT`], as a fraction of it.
pub const SPACING_TOLERANCE: f64 = 0.2;

/// A gap longer than this splits a track into separate segments.
pub const MAX_GAP_S: f64 = 0.5;

/// Keypoints below this confidence are treated as absent.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.3;

/// Minimum torso length accepted by [`normalize_pose`].
pub const EPS_TORSO: f64 = 1e-6;

/// Side length of the depth averaging window, in cells.
pub const DEPTH_WINDOW: usize = 5;

/// COCO-17 slot indices used by the pipeline.
pub mod coco {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE: usize = 1;
    pub const RIGHT_EYE: usize = 2;
    pub const LEFT_EAR: usize = 3;
    pub const RIGHT_EAR: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;

    /// Human-readable slot names, in slot order.
    pub const NAMES: [&str; super::KEYPOINT_COUNT] = [
        "nose",
        "left_eye",
        "right_eye",
        "left_ear",
        "right_ear",
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
        "left_hip",
        "right_hip",
        "left_knee",
        "right_knee",
        "left_ankle",
        "right_ankle",
    ];
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("missing landmark: {0}")]
    MissingLandmark(&'static str),
    #[error("degenerate torso: length {0} below threshold")]
    DegenerateTorso(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("frame {index}: field `{field}`: {reason}")]
    Schema {
        index: usize,
        field: &'static str,
        reason: &'static str,
    },
    #[error("labels reference unknown track `{0}`")]
    UnknownLabelTrack(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DepthError {
    #[error("depth patch is empty")]
    EmptyPatch,
    #[error("depth patch has {cells} cells, expected {expected}")]
    ShapeMismatch { cells: usize, expected: usize },
    #[error("no valid depth cell near the shoulder midpoint")]
    AllInvalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && (0.0..=1.0).contains(&self.confidence)
    }
}

/// Opaque track identifier assigned by the upstream tracker.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub String);

impl TrackId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TrackId {
    fn from(s: &str) -> Self {
        Self(String::from(s))
    }
}

/// One tracked person in one camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    /// Seconds from episode start.
    pub timestamp: f64,
    pub track_id: TrackId,
    pub keypoints: [Option<Keypoint>; KEYPOINT_COUNT],
    /// Pre-averaged distance to the robot, when the recording carries one.
    pub distance_m: Option<f64>,
}

impl PoseFrame {
    /// Keypoint in `slot` if present and at or above `floor` confidence.
    pub fn keypoint(&self, slot: usize, floor: f64) -> Option<Keypoint> {
        self.keypoints[slot].filter(|k| k.confidence >= floor)
    }

    /// Axis-aligned box around all confident keypoints, as `[x0, y0, x1, y1]`.
    pub fn keypoint_bounds(&self, floor: f64) -> Option<[f64; 4]> {
        let mut bounds: Option<[f64; 4]> = None;
        for k in self
            .keypoints
            .iter()
            .flatten()
            .filter(|k| k.confidence >= floor)
        {
            let b = bounds.get_or_insert([k.x, k.y, k.x, k.y]);
            b[0] = b[0].min(k.x);
            b[1] = b[1].min(k.y);
            b[2] = b[2].max(k.x);
            b[3] = b[3].max(k.y);
        }
        bounds
    }

    fn validate(&self, index: usize) -> Result<(), EpisodeError> {
        let schema = |field, reason| EpisodeError::Schema {
            index,
            field,
            reason,
        };
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(schema("t", "must be finite and non-negative"));
        }
        if self.track_id.0.is_empty() {
            return Err(schema("track_id", "must be non-empty"));
        }
        for kp in self.keypoints.iter().flatten() {
            if !kp.x.is_finite() || !kp.y.is_finite() {
                return Err(schema("kp", "coordinates must be finite"));
            }
            if !(0.0..=1.0).contains(&kp.confidence) {
                return Err(schema("kp", "confidence must lie in [0, 1]"));
            }
        }
        if let Some(d) = self.distance_m {
            if !d.is_finite() || d <= 0.0 {
                return Err(schema("dist_m", "must be finite and positive"));
            }
        }
        Ok(())
    }
}

/// All frames of one track, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub frames: Vec<PoseFrame>,
}

impl Track {
    /// Maximal runs of frames with no gap above [`MAX_GAP_S`].
    pub fn segments(&self) -> Vec<&[PoseFrame]> {
        split_at_gaps(&self.frames)
    }

    /// Number of consecutive-frame spacings outside the nominal tolerance.
    pub fn irregular_spacings(&self) -> usize {
        let lo = FRAME_DT * (1.0 - SPACING_TOLERANCE);
        let hi = FRAME_DT * (1.0 + SPACING_TOLERANCE);
        self.frames
            .windows(2)
            .filter(|w| {
                let dt = w[1].timestamp - w[0].timestamp;
                dt < lo || dt > hi
            })
            .count()
    }
}

/// Splits time-sorted frames wherever consecutive timestamps differ by more
/// than [`MAX_GAP_S`].
pub fn split_at_gaps(frames: &[PoseFrame]) -> Vec<&[PoseFrame]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..frames.len() {
        if frames[i].timestamp - frames[i - 1].timestamp > MAX_GAP_S {
            out.push(&frames[start..i]);
            start = i;
        }
    }
    if start < frames.len() {
        out.push(&frames[start..]);
    }
    out
}

/// One ground-truth decision label for a 2-second clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipLabel {
    pub start_s: f64,
    pub action: Action,
}

/// Ground truth for one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLabels {
    pub track_id: TrackId,
    /// Whether this person actually wanted to interact.
    #[serde(default)]
    pub interactant: bool,
    /// Start times of annotated gaze-shift preambles.
    #[serde(default)]
    pub preamble_times: Vec<f64>,
    /// Distance to the robot at each preamble, when known.
    #[serde(default)]
    pub preamble_distances: Vec<f64>,
    #[serde(default)]
    pub expected_gate: Option<TriggerKind>,
    pub expected_action: Action,
    #[serde(default)]
    pub decisions: Vec<ClipLabel>,
}

impl TrackLabels {
    /// Label in force at time `t`: the last clip label starting at or before
    /// `t`, falling back to `Probe` before the first one.
    pub fn action_at(&self, t: f64) -> Action {
        self.decisions
            .iter()
            .rev()
            .find(|c| c.start_s <= t + 1e-9)
            .map(|c| c.action)
            .unwrap_or(Action::Probe)
    }
}

/// Ground truth for a whole episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLabels {
    #[serde(default)]
    pub main_interactant: Option<TrackId>,
    #[serde(default)]
    pub tracks: Vec<TrackLabels>,
}

impl EpisodeLabels {
    pub fn track(&self, id: &TrackId) -> Option<&TrackLabels> {
        self.tracks.iter().find(|t| &t.track_id == id)
    }
}

/// One replayed recording: frames grouped by track plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub tracks: Vec<Track>,
    pub labels: Option<EpisodeLabels>,
}

impl Episode {
    /// Validates frames, sorts them by `(track_id, timestamp)` and groups them
    /// by track.
    pub fn from_frames(
        id: impl Into<String>,
        mut frames: Vec<PoseFrame>,
        labels: Option<EpisodeLabels>,
    ) -> Result<Self, EpisodeError> {
        for (i, f) in frames.iter().enumerate() {
            f.validate(i)?;
        }
        frames.sort_by(|a, b| {
            a.track_id
                .cmp(&b.track_id)
                .then(a.timestamp.total_cmp(&b.timestamp))
        });
        let mut tracks: Vec<Track> = Vec::new();
        for f in frames {
            match tracks.last_mut() {
                Some(t) if t.id == f.track_id => t.frames.push(f),
                _ => tracks.push(Track {
                    id: f.track_id.clone(),
                    frames: alloc::vec![f],
                }),
            }
        }
        if let Some(l) = &labels {
            for tl in &l.tracks {
                if !tracks.iter().any(|t| t.id == tl.track_id) {
                    return Err(EpisodeError::UnknownLabelTrack(tl.track_id.0.clone()));
                }
            }
            if let Some(main) = &l.main_interactant {
                if !tracks.iter().any(|t| &t.id == main) {
                    return Err(EpisodeError::UnknownLabelTrack(main.0.clone()));
                }
            }
        }
        Ok(Self {
            id: id.into(),
            tracks,
            labels,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.tracks.iter().map(|t| t.frames.len()).sum()
    }

    pub fn track(&self, id: &TrackId) -> Option<&Track> {
        self.tracks.iter().find(|t| &t.id == id)
    }

    /// Last timestamp in the episode, `0.0` when empty.
    pub fn end_s(&self) -> f64 {
        self.tracks
            .iter()
            .filter_map(|t| t.frames.last())
            .map(|f| f.timestamp)
            .fold(0.0, f64::max)
    }

    /// All frames in `(track_id, timestamp)` order.
    pub fn frames(&self) -> impl Iterator<Item = &PoseFrame> {
        self.tracks.iter().flat_map(|t| t.frames.iter())
    }
}

/// A 2D point in normalized body units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl core::ops::Sub for Point {
    type Output = Point;

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        crate::stats::hypot(self.x, self.y)
    }

    pub fn lerp(self, o: Point, u: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * u, self.y + (o.y - self.y) * u)
    }
}

/// Keypoints re-centred on the shoulder midpoint and scaled by the inverse
/// torso length. Absent or low-confidence slots are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPose {
    pub points: [Option<Point>; KEYPOINT_COUNT],
}

impl NormalizedPose {
    pub fn empty() -> Self {
        Self {
            points: [None; KEYPOINT_COUNT],
        }
    }

    pub fn point(&self, slot: usize) -> Option<Point> {
        self.points[slot]
    }
}

fn midpoint(a: Keypoint, b: Keypoint) -> Point {
    Point::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0)
}

/// Re-centres keypoints at the shoulder midpoint and divides by the distance
/// between the shoulder and hip midpoints.
pub fn normalize_pose(
    frame: &PoseFrame,
    confidence_floor: f64,
) -> Result<NormalizedPose, PoseError> {
    let anchor = |slot: usize| {
        frame
            .keypoint(slot, confidence_floor)
            .ok_or(PoseError::MissingLandmark(coco::NAMES[slot]))
    };
    let ls = anchor(coco::LEFT_SHOULDER)?;
    let rs = anchor(coco::RIGHT_SHOULDER)?;
    let lh = anchor(coco::LEFT_HIP)?;
    let rh = anchor(coco::RIGHT_HIP)?;

    let shoulder_mid = midpoint(ls, rs);
    let torso = (midpoint(lh, rh) - shoulder_mid).norm();
    if !(torso >= EPS_TORSO) {
        return Err(PoseError::DegenerateTorso(torso));
    }

    let mut out = NormalizedPose::empty();
    for (slot, p) in out.points.iter_mut().enumerate() {
        *p = frame.keypoint(slot, confidence_floor).map(|k| {
            Point::new(
                (k.x - shoulder_mid.x) / torso,
                (k.y - shoulder_mid.y) / torso,
            )
        });
    }
    Ok(out)
}

/// Depth image region in meters; `None` marks an invalid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPatch {
    pub width: usize,
    pub height: usize,
    /// Row-major cells.
    pub cells: Vec<Option<f64>>,
}

impl DepthPatch {
    pub fn new(width: usize, height: usize, cells: Vec<Option<f64>>) -> Result<Self, DepthError> {
        if width == 0 || height == 0 {
            return Err(DepthError::EmptyPatch);
        }
        if cells.len() != width * height {
            return Err(DepthError::ShapeMismatch {
                cells: cells.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            cells,
        })
    }

    pub fn uniform(width: usize, height: usize, meters: f64) -> Self {
        Self {
            width,
            height,
            cells: alloc::vec![Some(meters); width * height],
        }
    }

    fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.cells[row * self.width + col].filter(|d| d.is_finite() && *d > 0.0)
    }
}

/// Mean of the valid depth cells in the [`DEPTH_WINDOW`]-wide square centred
/// on `shoulder_mid` (pixel coordinates in the patch frame).
pub fn estimate_distance(patch: &DepthPatch, shoulder_mid: (f64, f64)) -> Result<f64, DepthError> {
    if patch.width == 0 || patch.height == 0 || patch.cells.is_empty() {
        return Err(DepthError::EmptyPatch);
    }
    let half = (DEPTH_WINDOW / 2) as i64;
    let cx = libm::round(shoulder_mid.0) as i64;
    let cy = libm::round(shoulder_mid.1) as i64;
    let (mut sum, mut n) = (0.0, 0usize);
    for row in (cy - half)..=(cy + half) {
        for col in (cx - half)..=(cx + half) {
            if row < 0 || col < 0 || row as usize >= patch.height || col as usize >= patch.width {
                continue;
            }
            if let Some(d) = patch.get(col as usize, row as usize) {
                sum += d;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(DepthError::AllInvalid);
    }
    Ok(sum / n as f64)
}
