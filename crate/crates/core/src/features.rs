//! Head-geometry signals and the 21-value velocity summary for one window.
//!
//! Seven per-frame signals are computed from normalized head keypoints:
//!
//! | # | signal             | definition                                  |
//! |---|--------------------|---------------------------------------------|
//! | 0 | left ear→nose x    | `(LEar - Nose).x`                            |
//! | 1 | left ear→nose y    | `(LEar - Nose).y`                            |
//! | 2 | right ear→nose x   | `(REar - Nose).x`                            |
//! | 3 | right ear→nose y   | `(REar - Nose).y`                            |
//! | 4 | eye separation     | `‖LEye - REye‖`                              |
//! | 5 | ear separation     | `‖LEar - REar‖`                              |
//! | 6 | ear symmetry       | `min(‖LEar-Nose‖, ‖REar-Nose‖) / max(..)`    |
//!
//! Each series is differenced once (`v[t] = s[t+1] - s[t]`) and summarized by
//! max, min and population standard deviation, in that order, giving
//! `7 × 3 = 21` values. The order is frozen; use [`FeatureVector::get`]
//! rather than raw indices.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{coco, normalize_pose, split_at_gaps, NormalizedPose, Point, PoseFrame, TrackId};
use crate::stats;

/// Frames per window: 15 fps × 2 s.
pub const WINDOW_FRAMES: usize = 30;
pub const SIGNAL_COUNT: usize = 7;
pub const STAT_COUNT: usize = 3;
pub const FEATURE_COUNT: usize = SIGNAL_COUNT * STAT_COUNT;

/// Longest run of missing head keypoints bridged by linear interpolation.
pub const MAX_INTERPOLATION_GAP: usize = 3;

const HEAD_SLOTS: [usize; 5] = [
    coco::NOSE,
    coco::LEFT_EYE,
    coco::RIGHT_EYE,
    coco::LEFT_EAR,
    coco::RIGHT_EAR,
];

const EPS_HEAD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("window has {frames} usable frames, need {WINDOW_FRAMES}")]
    ShortWindow { frames: usize },
    #[error("{slot} missing for {gap} frames, cannot interpolate")]
    MissingHeadKeypoints { slot: &'static str, gap: usize },
    #[error("ear and nose coincide at frame {frame}")]
    DegenerateHead { frame: usize },
    #[error("signal series have inconsistent lengths")]
    RaggedSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    LeftEarNoseX,
    LeftEarNoseY,
    RightEarNoseX,
    RightEarNoseY,
    EyeSeparation,
    EarSeparation,
    EarSymmetry,
}

impl Signal {
    pub const ALL: [Signal; SIGNAL_COUNT] = [
        Signal::LeftEarNoseX,
        Signal::LeftEarNoseY,
        Signal::RightEarNoseX,
        Signal::RightEarNoseY,
        Signal::EyeSeparation,
        Signal::EarSeparation,
        Signal::EarSymmetry,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Signal::LeftEarNoseX => "left_ear_nose_x",
            Signal::LeftEarNoseY => "left_ear_nose_y",
            Signal::RightEarNoseX => "right_ear_nose_x",
            Signal::RightEarNoseY => "right_ear_nose_y",
            Signal::EyeSeparation => "eye_separation",
            Signal::EarSeparation => "ear_separation",
            Signal::EarSymmetry => "ear_symmetry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stat {
    Max,
    Min,
    Std,
}

impl Stat {
    pub const ALL: [Stat; STAT_COUNT] = [Stat::Max, Stat::Min, Stat::Std];

    pub fn name(self) -> &'static str {
        match self {
            Stat::Max => "max",
            Stat::Min => "min",
            Stat::Std => "std",
        }
    }
}

/// Seven equal-length signal series for one track window.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    pub track_id: TrackId,
    pub window_start: f64,
    series: [Vec<f64>; SIGNAL_COUNT],
}

impl SignalWindow {
    pub fn new(
        track_id: TrackId,
        window_start: f64,
        series: [Vec<f64>; SIGNAL_COUNT],
    ) -> Result<Self, FeatureError> {
        let len = series[0].len();
        if series.iter().any(|s| s.len() != len) {
            return Err(FeatureError::RaggedSeries);
        }
        if len < 2 {
            return Err(FeatureError::ShortWindow { frames: len });
        }
        Ok(Self {
            track_id,
            window_start,
            series,
        })
    }

    pub fn series(&self, signal: Signal) -> &[f64] {
        &self.series[signal.index()]
    }

    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First differences of every series.
    pub fn velocities(&self) -> [Vec<f64>; SIGNAL_COUNT] {
        core::array::from_fn(|i| self.series[i].windows(2).map(|w| w[1] - w[0]).collect())
    }
}

/// The 21 velocity statistics, `(max, min, std)` per signal in [`Signal::ALL`]
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, signal: Signal, stat: Stat) -> f64 {
        self.0[Self::column(signal, stat)]
    }

    pub fn column(signal: Signal, stat: Stat) -> usize {
        signal.index() * STAT_COUNT + stat as usize
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Column names such as `left_ear_nose_x_max`, in vector order.
    pub fn column_names() -> Vec<String> {
        let mut out = Vec::with_capacity(FEATURE_COUNT);
        for s in Signal::ALL {
            for st in Stat::ALL {
                let mut name = String::from(s.name());
                name.push('_');
                name.push_str(st.name());
                out.push(name);
            }
        }
        out
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        <[f64; FEATURE_COUNT]>::try_from(values).ok().map(Self)
    }
}

/// Per-window feature extraction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub confidence_floor: f64,
    pub max_interpolation_gap: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            confidence_floor: crate::pose::DEFAULT_CONFIDENCE_FLOOR,
            max_interpolation_gap: MAX_INTERPOLATION_GAP,
        }
    }
}

/// Fills interior runs of `None` no longer than `max_gap` by linear
/// interpolation between the neighbouring present points.
fn interpolate_series(
    series: &mut [Option<Point>],
    max_gap: usize,
    slot: usize,
) -> Result<(), FeatureError> {
    let missing = |gap| FeatureError::MissingHeadKeypoints {
        slot: coco::NAMES[slot],
        gap,
    };
    let n = series.len();
    let mut i = 0;
    while i < n {
        if series[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && series[i].is_none() {
            i += 1;
        }
        let gap = i - start;
        if start == 0 || i == n || gap > max_gap {
            return Err(missing(gap));
        }
        let (a, b) = (series[start - 1].unwrap(), series[i].unwrap());
        for (k, p) in series[start..i].iter_mut().enumerate() {
            *p = Some(a.lerp(b, (k + 1) as f64 / (gap + 1) as f64));
        }
    }
    Ok(())
}

/// Computes the seven head-geometry series over the first [`WINDOW_FRAMES`]
/// normalized poses.
pub fn compute_signals(
    track_id: TrackId,
    window_start: f64,
    poses: &[NormalizedPose],
    max_interpolation_gap: usize,
) -> Result<SignalWindow, FeatureError> {
    if poses.len() < WINDOW_FRAMES {
        return Err(FeatureError::ShortWindow {
            frames: poses.len(),
        });
    }
    let poses = &poses[..WINDOW_FRAMES];

    let mut head: [Vec<Option<Point>>; 5] =
        core::array::from_fn(|h| poses.iter().map(|p| p.point(HEAD_SLOTS[h])).collect());
    for (h, series) in head.iter_mut().enumerate() {
        interpolate_series(series, max_interpolation_gap, HEAD_SLOTS[h])?;
    }
    let [nose, leye, reye, lear, rear] = head;

    let mut series: [Vec<f64>; SIGNAL_COUNT] =
        core::array::from_fn(|_| Vec::with_capacity(WINDOW_FRAMES));
    for t in 0..WINDOW_FRAMES {
        let (n, le, re, la, ra) = (
            nose[t].unwrap(),
            leye[t].unwrap(),
            reye[t].unwrap(),
            lear[t].unwrap(),
            rear[t].unwrap(),
        );
        let left = la - n;
        let right = ra - n;
        let (dl, dr) = (left.norm(), right.norm());
        let hi = dl.max(dr);
        if hi < EPS_HEAD || dl.min(dr) < EPS_HEAD {
            return Err(FeatureError::DegenerateHead { frame: t });
        }
        series[0].push(left.x);
        series[1].push(left.y);
        series[2].push(right.x);
        series[3].push(right.y);
        series[4].push((le - re).norm());
        series[5].push((la - ra).norm());
        series[6].push(dl.min(dr) / hi);
    }
    SignalWindow::new(track_id, window_start, series)
}

/// Max, min and population std of each signal's first differences.
pub fn compute_features(signals: &SignalWindow) -> FeatureVector {
    let mut out = [0.0; FEATURE_COUNT];
    for (i, v) in signals.velocities().iter().enumerate() {
        out[i * STAT_COUNT] = stats::max(v);
        out[i * STAT_COUNT + 1] = stats::min(v);
        out[i * STAT_COUNT + 2] = stats::population_std(v);
    }
    FeatureVector(out)
}

/// Full extraction for the frames of one track that fall inside a window:
/// gap check, normalization, interpolation, signals and summary statistics.
///
/// Frames whose anchors fail normalization count as missing head keypoints.
pub fn window_features(
    track_id: &TrackId,
    window_start: f64,
    frames: &[PoseFrame],
    config: &FeatureConfig,
) -> Result<(SignalWindow, FeatureVector), FeatureError> {
    let segments = split_at_gaps(frames);
    if segments.len() > 1 {
        let longest = segments.iter().map(|s| s.len()).max().unwrap_or(0);
        return Err(FeatureError::ShortWindow { frames: longest });
    }
    if frames.len() < WINDOW_FRAMES {
        return Err(FeatureError::ShortWindow {
            frames: frames.len(),
        });
    }
    let poses: Vec<NormalizedPose> = frames[..WINDOW_FRAMES]
        .iter()
        .map(|f| {
            normalize_pose(f, config.confidence_floor).unwrap_or_else(|_| NormalizedPose::empty())
        })
        .collect();
    let signals = compute_signals(
        track_id.clone(),
        window_start,
        &poses,
        config.max_interpolation_gap,
    )?;
    let features = compute_features(&signals);
    Ok((signals, features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn head_pose(nose: (f64, f64), lear: (f64, f64), rear: (f64, f64)) -> NormalizedPose {
        let mut p = NormalizedPose::empty();
        p.points[coco::NOSE] = Some(Point::new(nose.0, nose.1));
        p.points[coco::LEFT_EAR] = Some(Point::new(lear.0, lear.1));
        p.points[coco::RIGHT_EAR] = Some(Point::new(rear.0, rear.1));
        p.points[coco::LEFT_EYE] = Some(Point::new(nose.0 + 0.05, nose.1 - 0.05));
        p.points[coco::RIGHT_EYE] = Some(Point::new(nose.0 - 0.05, nose.1 - 0.05));
        p
    }

    fn constant_window(pose: NormalizedPose) -> SignalWindow {
        compute_signals("t".into(), 0.0, &vec![pose; WINDOW_FRAMES], 3).unwrap()
    }

    #[test]
    fn frontal_face_is_symmetric() {
        let w = constant_window(head_pose((0.0, -0.5), (0.15, -0.55), (-0.15, -0.55)));
        assert!(w.series(Signal::EarSymmetry).iter().all(|&s| s == 1.0));
    }

    #[test]
    fn profile_ratio_is_half() {
        let w = constant_window(head_pose((0.0, -0.5), (0.2, -0.5), (-0.1, -0.5)));
        assert!(w
            .series(Signal::EarSymmetry)
            .iter()
            .all(|&s| (s - 0.5).abs() < 1e-15));
    }

    #[test]
    fn static_pose_gives_constant_series_and_zero_features() {
        let w = constant_window(head_pose((0.01, -0.5), (0.17, -0.52), (-0.12, -0.56)));
        for s in Signal::ALL {
            let v = w.series(s);
            assert!(v.iter().all(|&x| x == v[0]), "{}", s.name());
        }
        assert_eq!(compute_features(&w).0, [0.0; FEATURE_COUNT]);
    }

    #[test]
    fn linear_ramp_has_constant_velocity() {
        let mut series: [Vec<f64>; SIGNAL_COUNT] =
            core::array::from_fn(|_| vec![0.3; WINDOW_FRAMES]);
        series[0] = (0..WINDOW_FRAMES).map(|t| 0.02 * t as f64).collect();
        let w = SignalWindow::new("t".into(), 0.0, series).unwrap();
        let f = compute_features(&w);
        assert!((f.get(Signal::LeftEarNoseX, Stat::Max) - 0.02).abs() < 1e-12);
        assert!((f.get(Signal::LeftEarNoseX, Stat::Min) - 0.02).abs() < 1e-12);
        assert!(f.get(Signal::LeftEarNoseX, Stat::Std) < 1e-12);
        for i in STAT_COUNT..FEATURE_COUNT {
            assert_eq!(f.0[i], 0.0);
        }
    }

    #[test]
    fn short_gap_is_interpolated() {
        let mut poses = vec![head_pose((0.0, -0.5), (0.15, -0.55), (-0.15, -0.55)); WINDOW_FRAMES];
        for (t, p) in poses.iter_mut().enumerate() {
            p.points[coco::NOSE] = Some(Point::new(0.01 * t as f64, -0.5));
        }
        for p in &mut poses[10..13] {
            p.points[coco::NOSE] = None;
        }
        let w = compute_signals("t".into(), 0.0, &poses, 3).unwrap();
        let s = w.series(Signal::LeftEarNoseX);
        for (t, v) in s.iter().enumerate().take(13).skip(10) {
            assert!((v - (0.15 - 0.01 * t as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn long_or_edge_gap_rejects_window() {
        let base = head_pose((0.0, -0.5), (0.15, -0.55), (-0.15, -0.55));
        let mut poses = vec![base; WINDOW_FRAMES];
        for p in &mut poses[10..14] {
            p.points[coco::LEFT_EAR] = None;
        }
        assert_eq!(
            compute_signals("t".into(), 0.0, &poses, 3),
            Err(FeatureError::MissingHeadKeypoints {
                slot: "left_ear",
                gap: 4
            })
        );
        let mut poses = vec![base; WINDOW_FRAMES];
        poses[0].points[coco::RIGHT_EYE] = None;
        assert!(matches!(
            compute_signals("t".into(), 0.0, &poses, 3),
            Err(FeatureError::MissingHeadKeypoints {
                slot: "right_eye",
                gap: 1
            })
        ));
    }

    #[test]
    fn short_window_is_rejected() {
        let base = head_pose((0.0, -0.5), (0.15, -0.55), (-0.15, -0.55));
        assert_eq!(
            compute_signals("t".into(), 0.0, &vec![base; 29], 3),
            Err(FeatureError::ShortWindow { frames: 29 })
        );
    }

    #[test]
    fn named_columns_follow_signal_order() {
        let names = FeatureVector::column_names();
        assert_eq!(names.len(), FEATURE_COUNT);
        assert_eq!(names[0], "left_ear_nose_x_max");
        assert_eq!(
            names[FeatureVector::column(Signal::EarSeparation, Stat::Std)],
            "ear_separation_std"
        );
        assert_eq!(names[20], "ear_symmetry_std");
    }
}
