//! CSV tables exchanged between commands: clip manifests and feature tables.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anomaly_core::{FeatureSchema, FeatureSet, FeatureVector};

use crate::{runtime, CliError};

pub const MANIFEST_HEADER: [&str; 3] = ["clip_id", "path", "label"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub clip_id: String,
    /// As written in the manifest (relative paths are relative to it).
    pub path: String,
    pub label: String,
    /// Optional noise-reference recording for adaptive cancellation.
    pub reference: Option<String>,
}

/// Joins a manifest-relative path onto the manifest's directory.
pub fn resolve(manifest: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, CliError> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        CliError::Config(format!("{} has no `{name}` column", path.display()))
    })
}

/// Reads a manifest with at least `clip_id,path,label`; extra columns other
/// than `reference` are ignored.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| runtime(format!("{}: {e}", path.display())))?
        .clone();
    let id_col = column(&headers, "clip_id", path)?;
    let path_col = column(&headers, "path", path)?;
    let label_col = column(&headers, "label", path)?;
    let ref_col = headers.iter().position(|h| h == "reference");
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{} row {}: {e}", path.display(), i + 1)))?;
        let field = |c: usize| rec.get(c).unwrap_or("").to_string();
        rows.push(ManifestRow {
            clip_id: field(id_col),
            path: field(path_col),
            label: field(label_col),
            reference: ref_col.map(field).filter(|r| !r.is_empty()),
        });
    }
    Ok(rows)
}

/// Writes `header` then `rows` with `\n` line endings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    let io = |e: csv::Error| runtime(format!("cannot write {}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// Class list used when none is imposed: the sorted distinct labels.
pub fn class_names_of<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    labels
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// Feature table: `clip_id,label,<feature names>`. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_features(path: &Path, data: &FeatureSet) -> Result<(), CliError> {
    let mut header = vec!["clip_id", "label"];
    header.extend(data.schema.names().iter().map(String::as_str));
    let rows: Vec<Vec<String>> = data
        .vectors
        .iter()
        .map(|v| {
            let label = v.label.map(|l| data.class_names[l].clone()).unwrap_or_default();
            let mut r = vec![v.clip_id.clone(), label];
            r.extend(v.values.iter().map(|x| format!("{x:?}")));
            r
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Header of a feature table, minus the two leading key columns.
pub fn read_feature_header(path: &Path) -> Result<Vec<String>, CliError> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    if headers.get(0) != Some("clip_id") || headers.get(1) != Some("label") {
        return Err(CliError::Config(format!(
            "{} must start with clip_id,label columns",
            path.display()
        )));
    }
    Ok(headers.iter().skip(2).map(str::to_string).collect())
}

/// Reads a feature table. With `classes`, labels are mapped onto that list
/// and unknown labels are rejected; otherwise the sorted distinct labels are
/// used.
pub fn read_features(path: &Path, classes: Option<&[String]>) -> Result<FeatureSet, CliError> {
    let names = read_feature_header(path)?;
    let schema = FeatureSchema::new(names);
    let mut rdr = open_reader(path)?;
    let mut raw = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Config(format!("{} row {row}: {e}", path.display())))?;
        if rec.len() != schema.len() + 2 {
            return Err(CliError::Config(format!(
                "{} row {row}: expected {} fields, found {}",
                path.display(),
                schema.len() + 2,
                rec.len()
            )));
        }
        let values = rec
            .iter()
            .skip(2)
            .zip(schema.names())
            .map(|(s, name)| {
                s.trim().parse::<f64>().map_err(|_| {
                    CliError::Config(format!(
                        "{} row {row}: column {name}: not a number: {s:?}",
                        path.display()
                    ))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        raw.push((rec[0].to_string(), rec[1].to_string(), values));
    }
    let class_names = match classes {
        Some(c) => c.to_vec(),
        None => class_names_of(raw.iter().map(|r| r.1.as_str())),
    };
    let mut data = FeatureSet::new(schema.clone(), class_names);
    for (clip_id, label, values) in raw {
        let idx = data.class_names.iter().position(|c| *c == label).ok_or_else(|| {
            CliError::Config(format!(
                "{}: clip {clip_id} has unknown label {label:?}",
                path.display()
            ))
        })?;
        data.vectors.push(FeatureVector {
            clip_id,
            label: Some(idx),
            schema: schema.clone(),
            values,
        });
    }
    Ok(data)
}
