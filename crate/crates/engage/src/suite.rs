//! Scenario suite files and `sim gen` output directories.
//!
//! A suite file is a JSON array of scenario specs, or a TOML file with one
//! `[[scenario]]` table per spec. A generated directory holds:
//!
//! ```text
//! <out>/suite.json          the specs that were rendered
//! <out>/episodes/<id>.ndjson
//! <out>/episodes/<id>.labels
//! <out>/mock/...            scripted responses, see mock_dir
//! <out>/features.csv        labelled classifier windows
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use engage_core::features::FeatureConfig;
use engage_core::sim::{
    benchmark_suite, gaze_suite, script_mock_backend, synthesize, training_windows, ScenarioSpec,
};
use engage_core::Episode;
use rayon::prelude::*;
use serde::Deserialize;

use crate::features_io::{self, FeatureRow};
use crate::{episode_io, mock_dir};

#[derive(Deserialize)]
struct TomlSuite {
    #[serde(default)]
    scenario: Vec<ScenarioSpec>,
}

pub fn read_suite(path: &Path) -> Result<Vec<ScenarioSpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let specs = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str::<TomlSuite>(&text)
            .with_context(|| format!("parsing {}", path.display()))?
            .scenario
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(specs)
}

/// A built-in suite by name: `benchmark` or `gaze:<n>`.
pub fn builtin_suite(name: &str, seed: u64) -> Result<Vec<ScenarioSpec>> {
    match name.split_once(':') {
        None if name == "benchmark" => Ok(benchmark_suite(seed)),
        Some(("gaze", n)) => Ok(gaze_suite(
            n.parse().with_context(|| format!("bad suite size {n:?}"))?,
            seed,
        )),
        _ => bail!("unknown built-in suite {name:?} (expected benchmark or gaze:<n>)"),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenSummary {
    pub episodes: usize,
    pub scripts: usize,
    pub feature_rows: usize,
    pub preambles: usize,
}

pub fn episodes_dir(out: &Path) -> PathBuf {
    out.join("episodes")
}

pub fn mock_scripts_dir(out: &Path) -> PathBuf {
    out.join("mock")
}

pub fn features_path(out: &Path) -> PathBuf {
    out.join("features.csv")
}

/// Renders every spec and writes the generated directory.
pub fn generate(
    specs: &[ScenarioSpec],
    out: &Path,
    features: &FeatureConfig,
    window_s: f64,
) -> Result<GenSummary> {
    let mut ids: Vec<&str> = specs.iter().map(|s| s.scenario_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        bail!("duplicate scenario id {:?}", w[0]);
    }
    let rendered: Vec<Episode> = specs
        .par_iter()
        .map(|s| {
            synthesize(s)
                .map(|(ep, _)| ep)
                .with_context(|| format!("scenario {}", s.scenario_id))
        })
        .collect::<Result<_>>()?;

    let ep_dir = episodes_dir(out);
    fs::create_dir_all(&ep_dir).with_context(|| format!("creating {}", ep_dir.display()))?;
    let suite_json = serde_json::to_string_pretty(specs)? + "\n";
    fs::write(out.join("suite.json"), suite_json)?;

    let mut summary = GenSummary::default();
    let mut rows = Vec::new();
    for (spec, ep) in specs.iter().zip(&rendered) {
        let path = ep_dir.join(format!("{}.{}", ep.id, episode_io::EPISODE_EXTENSION));
        episode_io::write_episode(&path, ep)?;
        let labels = ep
            .labels
            .as_ref()
            .expect("synthesized episodes carry labels");
        episode_io::write_labels(&episode_io::labels_path(&path), labels)?;
        let scripts = script_mock_backend(spec);
        summary.scripts += mock_dir::write_scripts(
            &mock_scripts_dir(out),
            scripts.iter().map(|(k, v)| (k, v.as_str())),
        )?;
        let (windows, n) = training_windows(ep, labels, features, window_s);
        summary.preambles += n;
        rows.extend(windows.into_iter().map(|window| FeatureRow {
            episode_id: ep.id.clone(),
            window,
        }));
        summary.episodes += 1;
    }
    summary.feature_rows = rows.len();
    features_io::write_features(&features_path(out), &rows)?;
    Ok(summary)
}
