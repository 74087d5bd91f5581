//! Run configuration: one TOML file plus `section.key=value` overrides.
//!
//! ```toml
//! [paths]            # relative paths resolve against the config file
//! episodes = "suite/episodes"   # directory of .ndjson files, or one file
//! model = "model.txt"           # optional; trained from `features` when absent
//! features = "suite/features.csv"
//! mock_scripts = "suite/mock"
//! out = "run"
//!
//! [gate]             # Stage I thresholds and windowing
//! [train]            # classifier hyperparameters
//! [stage_two]        # strategy, k, temperature, eta, retries
//!
//! [backend]
//! kind = "mock"      # or "http"
//! endpoint = "https://vlm.example/v1/complete"
//! model_id = "some-vlm"
//! timeout_s = 120
//! max_in_flight = 4
//!
//! [run]
//! scenario_keys = true   # key mock scripts by episode/track
//! threads = 0            # 0 = one per core
//! ```
//!
//! Loading never stops at the first problem: syntax aside, every unknown
//! key, type error and invalid value is collected into [`ConfigErrors`].

use std::fmt;
use std::path::{Path, PathBuf};

use engage_core::gbdt::TrainConfig;
use engage_core::vlm::OrchestratorConfig;
use engage_core::GateConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::backend::TOKEN_ENV;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_scripts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.episodes,
            &mut self.model,
            &mut self.features,
            &mut self.mock_scripts,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model_id: String,
    pub timeout_s: f64,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: String::new(),
            model_id: String::new(),
            timeout_s: 120.0,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub scenario_keys: bool,
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            scenario_keys: true,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: Paths,
    pub gate: GateConfig,
    pub train: TrainConfig,
    pub stage_two: OrchestratorConfig,
    pub backend: BackendConfig,
    pub run: RunOptions,
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const SECTIONS: [&str; 6] = ["paths", "gate", "train", "stage_two", "backend", "run"];

/// Applies `section.key=value` (nested keys allowed). The value is read as a
/// TOML value when it parses as one, else as a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not key=value"))?;
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` must look like section.key"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("override `{key}`: `{p}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Keys in `given` that the default serialization of `T` does not have.
fn unknown_keys<T: Serialize + Default>(section: &str, given: &Table, out: &mut Vec<String>) {
    let known = Table::try_from(T::default()).unwrap_or_default();
    unknown_in(section, given, &known, out);
}

fn unknown_in(prefix: &str, given: &Table, known: &Table, out: &mut Vec<String>) {
    for (k, v) in given {
        match known.get(k) {
            Some(Value::Table(inner)) => {
                if let Value::Table(g) = v {
                    unknown_in(&format!("{prefix}.{k}"), g, inner, out);
                }
            }
            Some(_) => {}
            None => out.push(format!("unknown key `{prefix}.{k}`")),
        }
    }
}

fn section<T: DeserializeOwned + Serialize + Default>(
    table: &Table,
    name: &str,
    check_unknown: bool,
    errors: &mut Vec<String>,
) -> T {
    let Some(v) = table.get(name) else {
        return T::default();
    };
    let Value::Table(t) = v else {
        errors.push(format!("`{name}` must be a table"));
        return T::default();
    };
    if check_unknown {
        unknown_keys::<T>(name, t, errors);
    }
    match T::deserialize(v.clone()) {
        Ok(x) => x,
        Err(e) => {
            errors.push(format!("[{name}] {}", e.message()));
            T::default()
        }
    }
}

fn read(path: &Path) -> Result<(String, PathBuf), ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((text, base))
}

impl RunConfig {
    /// Builds a config from TOML text plus overrides; `base` anchors relative
    /// paths.
    pub fn from_toml(text: &str, overrides: &[String], base: &Path) -> Result<Self, ConfigErrors> {
        Self::check(Self::parse(text, overrides, base)?, false)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigErrors> {
        let (text, base) = read(path)?;
        Self::from_toml(&text, overrides, &base)
    }

    /// Defaults plus overrides, with paths relative to the working directory.
    pub fn from_overrides(overrides: &[String]) -> Result<Self, ConfigErrors> {
        Self::from_toml("", overrides, Path::new(""))
    }

    /// Like [`RunConfig::load`] (or [`RunConfig::from_overrides`] without a
    /// file), but also reports everything [`RunConfig::pipeline_problems`]
    /// finds, in the same error list.
    pub fn load_for_pipeline(
        path: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, ConfigErrors> {
        let parsed = match path {
            Some(p) => {
                let (text, base) = read(p)?;
                Self::parse(&text, overrides, &base)?
            }
            None => Self::parse("", overrides, Path::new(""))?,
        };
        Self::check(parsed, true)
    }

    /// Everything short of a syntax error yields a config (with defaults
    /// where sections failed) plus the problems found so far.
    fn parse(
        text: &str,
        overrides: &[String],
        base: &Path,
    ) -> Result<(Self, Vec<String>), ConfigErrors> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax: {}", e.message())]))?;
        let mut errors = Vec::new();
        for o in overrides {
            if let Err(e) = apply_override(&mut table, o) {
                errors.push(e);
            }
        }
        for k in table.keys() {
            if !SECTIONS.contains(&k.as_str()) {
                errors.push(format!("unknown section `{k}`"));
            }
        }
        let mut cfg = RunConfig {
            // These two deny unknown fields themselves.
            paths: section(&table, "paths", false, &mut errors),
            gate: section(&table, "gate", true, &mut errors),
            train: section(&table, "train", true, &mut errors),
            stage_two: section(&table, "stage_two", true, &mut errors),
            backend: section(&table, "backend", false, &mut errors),
            run: section(&table, "run", false, &mut errors),
        };
        cfg.paths.resolve(base);
        errors.extend(cfg.value_problems());
        Ok((cfg, errors))
    }

    fn check((cfg, mut errors): (Self, Vec<String>), pipeline: bool) -> Result<Self, ConfigErrors> {
        if pipeline {
            errors.extend(cfg.pipeline_problems());
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    fn value_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(
            self.gate
                .problems()
                .into_iter()
                .map(|p| format!("[gate] {p}")),
        );
        out.extend(
            self.train
                .problems()
                .into_iter()
                .map(|p| format!("[train] {p}")),
        );
        out.extend(
            self.stage_two
                .problems()
                .into_iter()
                .map(|p| format!("[stage_two] {p}")),
        );
        let b = &self.backend;
        if b.max_in_flight == 0 {
            out.push("[backend] max_in_flight must be >= 1".into());
        }
        if !(b.timeout_s > 0.0) || !b.timeout_s.is_finite() {
            out.push("[backend] timeout_s must be > 0".into());
        }
        out
    }

    /// Problems that block a full pipeline run: missing inputs, missing
    /// backend settings or credentials.
    pub fn pipeline_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = &self.paths;
        match &p.episodes {
            None => out.push("paths.episodes is required".into()),
            Some(e) if !e.exists() => {
                out.push(format!("paths.episodes: {} does not exist", e.display()))
            }
            _ => {}
        }
        match (&p.model, &p.features) {
            (Some(m), _) if !m.is_file() => {
                out.push(format!("paths.model: {} is not a file", m.display()))
            }
            (None, None) => out.push("one of paths.model or paths.features is required".into()),
            (None, Some(f)) if !f.is_file() => {
                out.push(format!("paths.features: {} is not a file", f.display()))
            }
            _ => {}
        }
        match self.backend.kind {
            BackendKind::Mock => match &p.mock_scripts {
                None => out.push("paths.mock_scripts is required with the mock backend".into()),
                Some(d) if !d.is_dir() => out.push(format!(
                    "paths.mock_scripts: {} is not a directory",
                    d.display()
                )),
                _ => {}
            },
            BackendKind::Http => {
                if self.backend.endpoint.is_empty() {
                    out.push("backend.endpoint is required with the http backend".into());
                }
                if self.backend.model_id.is_empty() {
                    out.push("backend.model_id is required with the http backend".into());
                }
                if std::env::var(TOKEN_ENV).map_or(true, |t| t.is_empty()) {
                    out.push(format!("{TOKEN_ENV} must be set with the http backend"));
                }
            }
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}
