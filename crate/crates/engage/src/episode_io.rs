//! Episode files: newline-delimited JSON, one record per (track, frame).
//!
//! ```text
//! {"v":1,"episode_id":"bench-00","track_id":"p1","t":0.0,"kp":[[x,y,c],null,...],"dist_m":3.1}
//! ```
//!
//! `kp` holds exactly 17 entries in COCO order; `null` marks an undetected
//! keypoint. `dist_m` is optional. Blank lines are ignored. Ground truth
//! lives in a JSON sidecar next to the episode with the extension replaced
//! by `.labels`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use engage_core::pose::{
    EpisodeError, EpisodeLabels, Keypoint, PoseFrame, TrackId, KEYPOINT_COUNT,
};
use engage_core::Episode;
use serde::{Deserialize, Serialize};

use crate::error::FormatError;

pub const EPISODE_VERSION: u32 = 1;
pub const LABELS_VERSION: u32 = 1;
pub const EPISODE_EXTENSION: &str = "ndjson";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    v: u32,
    episode_id: String,
    track_id: String,
    t: f64,
    kp: Vec<Option<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist_m: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelsFile {
    v: u32,
    #[serde(flatten)]
    labels: EpisodeLabels,
}

/// Sidecar path for an episode file.
pub fn labels_path(episode: &Path) -> PathBuf {
    episode.with_extension("labels")
}

/// Parses episode text. `source` names the input in errors; `fallback_id`
/// is used when the file has no records.
pub fn parse_episode(
    text: &str,
    source: &Path,
    fallback_id: &str,
    labels: Option<EpisodeLabels>,
) -> Result<Episode, FormatError> {
    let schema = |line, field: &str, reason: String| FormatError::Schema {
        path: source.to_path_buf(),
        line,
        field: field.into(),
        reason,
    };
    let mut frames = Vec::new();
    let mut lines = Vec::new();
    let mut episode_id: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(raw).map_err(|e| FormatError::Parse {
            path: source.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if r.v != EPISODE_VERSION {
            return Err(schema(line, "v", format!("unsupported version {}", r.v)));
        }
        match &episode_id {
            None => episode_id = Some(r.episode_id.clone()),
            Some(id) if *id != r.episode_id => {
                return Err(schema(
                    line,
                    "episode_id",
                    format!("`{}` differs from `{id}`", r.episode_id),
                ))
            }
            _ => {}
        }
        if r.kp.len() != KEYPOINT_COUNT {
            return Err(schema(
                line,
                "kp",
                format!("expected {KEYPOINT_COUNT} entries, found {}", r.kp.len()),
            ));
        }
        let mut keypoints = [None; KEYPOINT_COUNT];
        for (slot, k) in r.kp.iter().enumerate() {
            keypoints[slot] = k.map(|[x, y, c]| Keypoint::new(x, y, c));
        }
        frames.push(PoseFrame {
            timestamp: r.t,
            track_id: TrackId(r.track_id),
            keypoints,
            distance_m: r.dist_m,
        });
        lines.push(line);
    }
    let id = episode_id.unwrap_or_else(|| fallback_id.to_string());
    Episode::from_frames(id, frames, labels).map_err(|e| match e {
        EpisodeError::Schema {
            index,
            field,
            reason,
        } => schema(lines[index], field, reason.into()),
        other => FormatError::invalid(source, other.to_string()),
    })
}

/// Reads an episode and, when present, its labels sidecar.
pub fn read_episode(path: &Path) -> Result<Episode, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let sidecar = labels_path(path);
    let labels = if sidecar.exists() {
        Some(read_labels(&sidecar)?)
    } else {
        None
    };
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    parse_episode(&text, path, stem, labels)
}

pub fn read_labels(path: &Path) -> Result<EpisodeLabels, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let f: LabelsFile = serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if f.v != LABELS_VERSION {
        return Err(FormatError::Schema {
            path: path.to_path_buf(),
            line: 1,
            field: "v".into(),
            reason: format!("unsupported version {}", f.v),
        });
    }
    Ok(f.labels)
}

/// Serializes frames in `(track_id, timestamp)` order.
pub fn episode_to_string(episode: &Episode) -> String {
    let mut out = String::new();
    for f in episode.frames() {
        let r = Record {
            v: EPISODE_VERSION,
            episode_id: episode.id.clone(),
            track_id: f.track_id.0.clone(),
            t: f.timestamp,
            kp: f
                .keypoints
                .iter()
                .map(|k| k.map(|k| [k.x, k.y, k.confidence]))
                .collect(),
            dist_m: f.distance_m,
        };
        out.push_str(&serde_json::to_string(&r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

/// Writes the episode and, when it carries labels, the sidecar.
pub fn write_episode(path: &Path, episode: &Episode) -> Result<(), FormatError> {
    let file = fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(episode_to_string(episode).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| FormatError::io(path, e))?;
    if let Some(labels) = &episode.labels {
        write_labels(&labels_path(path), labels)?;
    }
    Ok(())
}

pub fn write_labels(path: &Path, labels: &EpisodeLabels) -> Result<(), FormatError> {
    let f = LabelsFile {
        v: LABELS_VERSION,
        labels: labels.clone(),
    };
    let text = serde_json::to_string_pretty(&f).expect("labels always serialize");
    fs::write(path, text + "\n").map_err(|e| FormatError::io(path, e))
}

/// Episode files in `dir`, sorted by name.
pub fn list_episodes(dir: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let entries = fs::read_dir(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| FormatError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == EPISODE_EXTENSION) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
