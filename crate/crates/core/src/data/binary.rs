use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Records as rows of binary features, with a real-valued target (0/1 for
/// classification, arbitrary for regression).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    bits: Vec<bool>,
    feature_names: Vec<String>,
    /// Raw variable each feature was derived from.
    feature_sources: Vec<String>,
    target: Vec<f64>,
    record_ids: Vec<String>,
}

impl BinaryDataset {
    /// `bits` is row-major with one row per target entry.
    pub fn new(
        bits: Vec<bool>,
        feature_names: Vec<String>,
        feature_sources: Vec<String>,
        target: Vec<f64>,
        record_ids: Vec<String>,
    ) -> Result<Self> {
        let width = feature_names.len();
        if feature_sources.len() != width {
            return Err(Error::Structure(format!(
                "{} feature sources for {width} features",
                feature_sources.len()
            )));
        }
        if bits.len() != width * target.len() {
            return Err(Error::Structure(format!(
                "bit matrix has {} cells, expected {} rows x {width}",
                bits.len(),
                target.len()
            )));
        }
        if record_ids.len() != target.len() {
            return Err(Error::Structure(format!(
                "{} record ids for {} rows",
                record_ids.len(),
                target.len()
            )));
        }
        Ok(Self {
            bits,
            feature_names,
            feature_sources,
            target,
            record_ids,
        })
    }

    /// Builds from row vectors; every feature is its own source.
    pub fn from_rows(rows: &[Vec<bool>], feature_names: Vec<String>, target: Vec<f64>) -> Result<Self> {
        let width = feature_names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Structure(format!(
                "row of width {} in a dataset of width {width}",
                bad.len()
            )));
        }
        let bits = rows.iter().flatten().copied().collect();
        let ids = (0..rows.len()).map(|i| (i + 1).to_string()).collect();
        let sources = feature_names.clone();
        Self::new(bits, feature_names, sources, target, ids)
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn record(&self, index: usize) -> &[bool] {
        let w = self.feature_names.len();
        &self.bits[index * w..(index + 1) * w]
    }

    pub fn records(&self) -> impl Iterator<Item = &[bool]> + '_ {
        (0..self.len()).map(move |i| self.record(i))
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_sources(&self) -> &[String] {
        &self.feature_sources
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn record_ids(&self) -> &[String] {
        &self.record_ids
    }

    pub fn target_is_binary(&self) -> bool {
        self.target.iter().all(|&t| t == 0.0 || t == 1.0)
    }

    /// Same records, new target.
    pub fn with_target(&self, target: Vec<f64>) -> Result<Self> {
        if target.len() != self.len() {
            return Err(Error::Structure(format!(
                "target of length {} for {} records",
                target.len(),
                self.len()
            )));
        }
        Ok(Self {
            target,
            ..self.clone()
        })
    }

    pub fn with_feature_sources(mut self, sources: Vec<String>) -> Result<Self> {
        if sources.len() != self.feature_count() {
            return Err(Error::Structure("feature source count mismatch".into()));
        }
        self.feature_sources = sources;
        Ok(self)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut bits = Vec::with_capacity(indices.len() * self.feature_count());
        for &i in indices {
            bits.extend_from_slice(self.record(i));
        }
        Self {
            bits,
            feature_names: self.feature_names.clone(),
            feature_sources: self.feature_sources.clone(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            record_ids: indices.iter().map(|&i| self.record_ids[i].clone()).collect(),
        }
    }

    /// CSV with header `record_id,target,<features...>` and 0/1 cells.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv(file)
    }

    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["record_id".to_string(), "target".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.record_ids[i].clone(), self.target[i].to_string()];
            rec.extend(self.record(i).iter().map(|&b| if b { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn read_csv(reader: impl std::io::Read, source: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "record_id" || &header[1] != "target" {
            return Err(Error::Config(format!(
                "{source}: binary datasets start with record_id,target columns"
            )));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut bits = Vec::new();
        let mut target = Vec::new();
        let mut ids = Vec::new();
        let mut problems = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            ids.push(rec[0].to_string());
            match rec[1].trim().parse::<f64>() {
                Ok(t) if t.is_finite() => target.push(t),
                _ => {
                    problems.push(format!("line {line}: bad target {:?}", &rec[1]));
                    target.push(0.0);
                }
            }
            for (j, cell) in rec.iter().skip(2).enumerate() {
                match cell.trim() {
                    "1" => bits.push(true),
                    "0" => bits.push(false),
                    other => {
                        problems.push(format!("line {line}: feature {:?} is not 0/1: {other:?}", names[j]));
                        bits.push(false);
                    }
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Parse {
                path: source.into(),
                problems,
            });
        }
        let sources = names.clone();
        Self::new(bits, names, sources, target, ids)
    }
}
