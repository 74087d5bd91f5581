//! Mock script directories.
//!
//! Each script is a text file at
//! `<root>/<scenario>/[<kind>/]<stage>[-<sample>][.retry<n>].txt`:
//!
//! * `<scenario>` may span several directories; scripts written by
//!   `sim gen` use `<episode>/<track>`, and `default` matches clips without
//!   a scenario;
//! * `<kind>` is `gaze` or `proxemic` and narrows the script to one trigger
//!   kind;
//! * `<stage>` is one of `analysis`, `contradiction`, `verify`, `majority`,
//!   `action`;
//! * `-<sample>` narrows to one independent-analysis sample;
//! * `.retry<n>` answers the n-th re-request after a malformed reply.
//!
//! A track or episode literally named `gaze` or `proxemic` is read as a
//! kind directory.

use std::fs;
use std::path::{Component, Path, PathBuf};

use engage_core::gate::TriggerKind;
use engage_core::vlm::{MockBackend, MockKey, Stage};
use walkdir::WalkDir;

use crate::error::FormatError;

pub fn kind_from_name(name: &str) -> Option<TriggerKind> {
    [TriggerKind::GazeShift, TriggerKind::ProxemicEntry]
        .into_iter()
        .find(|k| k.name() == name)
}

/// Relative path of the script for `key`.
pub fn script_path(key: &MockKey) -> PathBuf {
    let mut p = PathBuf::new();
    for part in key.scenario.split('/') {
        p.push(part);
    }
    if let Some(kind) = key.kind {
        p.push(kind.name());
    }
    let mut file = key.stage.slug().to_string();
    if let Some(s) = key.sample {
        file.push_str(&format!("-{s}"));
    }
    if key.attempt > 0 {
        file.push_str(&format!(".retry{}", key.attempt));
    }
    file.push_str(".txt");
    p.push(file);
    p
}

/// Parses a path relative to the script root back into its key.
pub fn parse_script_path(rel: &Path) -> Option<MockKey> {
    let mut parts: Vec<&str> = rel
        .components()
        .map(|c| match c {
            Component::Normal(s) => s.to_str(),
            _ => None,
        })
        .collect::<Option<_>>()?;
    let file = parts.pop()?.strip_suffix(".txt")?;
    let kind = match parts.last().and_then(|p| kind_from_name(p)) {
        Some(k) => {
            parts.pop();
            Some(k)
        }
        None => None,
    };
    if parts.is_empty() {
        return None;
    }
    let (file, attempt) = match file.split_once(".retry") {
        Some((f, n)) => (f, n.parse().ok().filter(|&n| n > 0)?),
        None => (file, 0),
    };
    let (stage, sample) = match file.split_once('-') {
        Some((s, n)) => (s, Some(n.parse().ok()?)),
        None => (file, None),
    };
    Some(MockKey {
        scenario: parts.join("/"),
        kind,
        stage: Stage::from_slug(stage)?,
        sample,
        attempt,
    })
}

pub fn write_scripts<'a>(
    root: &Path,
    scripts: impl IntoIterator<Item = (&'a MockKey, &'a str)>,
) -> Result<usize, FormatError> {
    let mut n = 0;
    for (key, text) in scripts {
        let path = root.join(script_path(key));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        }
        fs::write(&path, text).map_err(|e| FormatError::io(&path, e))?;
        n += 1;
    }
    Ok(n)
}

/// Loads every `.txt` script under `root`. Files that do not follow the
/// naming scheme are errors, so typos never silently drop a script.
pub fn read_scripts(root: &Path) -> Result<MockBackend, FormatError> {
    let mut backend = MockBackend::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| FormatError::invalid(root, e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let rel = path
            .strip_prefix(root)
            .expect("walkdir yields paths under root");
        let key = parse_script_path(rel).ok_or_else(|| {
            FormatError::invalid(path, "not a mock script name (see mock directory layout)")
        })?;
        let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        backend.insert(key, text);
    }
    Ok(backend)
}
