//! Exhaustively evaluated base-model dataset, persisted as JSON lines.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, DesignSpace, SpaceSchema};
use crate::error::{Error, Result};
use crate::surrogate::{evaluate_batch, Evaluator, PpaRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct BaseDataset {
    space: DesignSpace,
    /// Points in enumeration order.
    points: Vec<DesignPoint>,
    records: HashMap<DesignPoint, PpaRecord>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    point: DesignPoint,
    record: PpaRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Schema file the space was loaded from.
    pub schema: String,
    pub space: SpaceSchema,
    /// Records file, relative to the manifest.
    pub records: String,
    pub count: usize,
}

impl BaseDataset {
    /// Checks that `records` covers every valid point of `space`.
    pub fn new(space: DesignSpace, records: HashMap<DesignPoint, PpaRecord>) -> Result<Self> {
        let points = space.enumerate();
        if let Some(p) = points.iter().find(|p| !records.contains_key(*p)) {
            return Err(Error::config(format!("base dataset lacks a record for {p}")));
        }
        if records.len() != points.len() {
            return Err(Error::config("base dataset holds records outside its space"));
        }
        Ok(Self { space, points, records })
    }

    /// Evaluates every valid point of `space`.
    pub fn build<E: Evaluator + ?Sized>(space: DesignSpace, evaluator: &E, parallelism: usize) -> Result<Self> {
        let points = space.enumerate();
        let recs = evaluate_batch(evaluator, &points, parallelism)?;
        let records = points.iter().cloned().zip(recs).collect();
        Ok(Self { space, points, records })
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn record(&self, point: &DesignPoint) -> Option<&PpaRecord> {
        self.records.get(point)
    }

    /// Completes a partial assignment (e.g. an intersection point) with the
    /// base space's defaults for the parameters it lacks.
    pub fn complete(&self, partial: &DesignPoint) -> DesignPoint {
        complete_with_defaults(&self.space, partial)
    }

    /// Record of the base point matching `partial` on its parameters, with
    /// defaults for the rest.
    pub fn fetch(&self, partial: &DesignPoint) -> Result<PpaRecord> {
        let full = self.complete(partial);
        self.records
            .get(&full)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("no base record for {full}")))
    }

    /// Writes `<stem>.jsonl` and `<stem>.manifest.json` next to each other.
    /// Returns the manifest path.
    pub fn save(&self, records_path: impl AsRef<Path>, schema_name: &str) -> Result<PathBuf> {
        let records_path = records_path.as_ref();
        let mut w = BufWriter::new(fs::File::create(records_path)?);
        for p in &self.points {
            let line = Line {
                point: p.clone(),
                record: self.records[p],
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let manifest = Manifest {
            schema: schema_name.to_string(),
            space: self.space.to_schema(),
            records: records_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            count: self.points.len(),
        };
        let mpath = manifest_path(records_path);
        fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)?;
        Ok(mpath)
    }

    /// Loads from a manifest path, or from a records path whose manifest sits
    /// next to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mpath = if path.to_string_lossy().ends_with(".manifest.json") {
            path.to_path_buf()
        } else {
            manifest_path(path)
        };
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
        let space = DesignSpace::from_schema(manifest.space.clone())?;
        let rpath = mpath.parent().unwrap_or(Path::new(".")).join(&manifest.records);
        let reader = BufReader::new(fs::File::open(&rpath)?);
        let mut records = HashMap::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line)?;
            records.insert(l.point, l.record);
        }
        if records.len() != manifest.count {
            return Err(Error::config(format!(
                "manifest announces {} records, file holds {}",
                manifest.count,
                records.len()
            )));
        }
        Self::new(space, records)
    }
}

/// `<dir>/<stem>.manifest.json` for `<dir>/<stem>.jsonl`.
pub fn manifest_path(records_path: &Path) -> PathBuf {
    let stem = records_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    records_path.with_file_name(format!("{stem}.manifest.json"))
}

/// `partial` restricted to `space`'s parameters, with defaults filled in.
pub fn complete_with_defaults(space: &DesignSpace, partial: &DesignPoint) -> DesignPoint {
    space
        .params()
        .iter()
        .map(|p| {
            let v = partial.get(&p.name).cloned().unwrap_or_else(|| p.default_or_first().clone());
            (p.name.clone(), v)
        })
        .collect()
}
