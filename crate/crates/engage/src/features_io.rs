//! Labelled feature files: CSV with a header row
//! `episode_id,track_id,window_start,<21 feature columns>,label`, where
//! `label` is 0 or 1 and feature columns follow the feature vector order.

use std::path::Path;

use engage_core::features::FEATURE_COUNT;
use engage_core::gbdt::LabeledSet;
use engage_core::sim::LabelledWindow;
use engage_core::FeatureVector;

use crate::error::FormatError;

/// One row of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub episode_id: String,
    pub window: LabelledWindow,
}

pub fn header() -> Vec<String> {
    let mut h = vec![
        "episode_id".to_string(),
        "track_id".into(),
        "window_start".into(),
    ];
    h.extend(FeatureVector::column_names());
    h.push("label".into());
    h
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<(), FormatError> {
    let csv_err = |e: csv::Error| FormatError::invalid(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header()).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.episode_id.clone(),
            r.window.track_id.0.clone(),
            r.window.window_start.to_string(),
        ];
        rec.extend(r.window.features.as_slice().iter().map(f64::to_string));
        rec.push(if r.window.label { "1" } else { "0" }.into());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>, FormatError> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| FormatError::invalid(path, e.to_string()))?;
    let want = header();
    let got = r
        .headers()
        .map_err(|e| FormatError::invalid(path, e.to_string()))?;
    if got.iter().ne(want.iter().map(String::as_str)) {
        return Err(FormatError::Schema {
            path: path.to_path_buf(),
            line: 1,
            field: "header".into(),
            reason: format!("expected {}", want.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| FormatError::invalid(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field_err = |field: &str, reason: &str| FormatError::Schema {
            path: path.to_path_buf(),
            line,
            field: field.into(),
            reason: reason.into(),
        };
        let num = |i: usize| -> Result<f64, FormatError> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| field_err(&want[i], "expected a finite number"))
        };
        let mut values = [0.0; FEATURE_COUNT];
        for (j, v) in values.iter_mut().enumerate() {
            *v = num(3 + j)?;
        }
        let label = match &rec[3 + FEATURE_COUNT] {
            "0" => false,
            "1" => true,
            _ => return Err(field_err("label", "expected 0 or 1")),
        };
        out.push(FeatureRow {
            episode_id: rec[0].to_string(),
            window: LabelledWindow {
                track_id: rec[1].into(),
                window_start: num(2)?,
                features: FeatureVector(values),
                label,
            },
        });
    }
    Ok(out)
}

pub fn labeled_set(rows: &[FeatureRow]) -> LabeledSet {
    LabeledSet::new(
        rows.iter()
            .map(|r| (r.window.features, r.window.label))
            .collect(),
    )
}
