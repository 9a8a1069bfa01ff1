use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::predicate::RowView;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Column values; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    fn subset(&self, indices: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(indices.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(indices.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            ColumnData::Numeric(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnData::Categorical(v) => v[row].clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

/// Which CSV columns to read and how to type them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<(String, ColumnKind)>,
    pub target: String,
    /// Column holding record identifiers; row numbers (from 1) are used when absent.
    #[serde(default)]
    pub id_column: Option<String>,
}

/// Typed columns plus a fully populated target and unique record ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    columns: Vec<Column>,
    target_name: String,
    target: Vec<f64>,
    record_ids: Vec<String>,
    id_column: Option<String>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "null")
}

impl RawDataset {
    pub fn new(
        columns: Vec<Column>,
        target_name: impl Into<String>,
        target: Vec<f64>,
        record_ids: Vec<String>,
    ) -> Result<Self> {
        let target_name = target_name.into();
        let n = target.len();
        if record_ids.len() != n {
            return Err(Error::Structure(format!(
                "{} record ids for {n} rows",
                record_ids.len()
            )));
        }
        let mut names = HashSet::new();
        for c in &columns {
            if c.data.len() != n {
                return Err(Error::Structure(format!(
                    "column {} has {} rows, expected {n}",
                    c.name,
                    c.data.len()
                )));
            }
            if !names.insert(c.name.as_str()) || c.name == target_name {
                return Err(Error::Structure(format!("duplicate column {}", c.name)));
            }
        }
        if let Some(bad) = target.iter().find(|t| !t.is_finite()) {
            return Err(Error::Structure(format!("non-finite target value {bad}")));
        }
        let mut ids = HashSet::with_capacity(n);
        if let Some(dup) = record_ids.iter().find(|id| !ids.insert(id.as_str())) {
            return Err(Error::Structure(format!("duplicate record id {dup}")));
        }
        Ok(Self {
            columns,
            target_name,
            target,
            record_ids,
            id_column: None,
        })
    }

    pub fn with_id_column(mut self, name: impl Into<String>) -> Self {
        self.id_column = Some(name.into());
        self
    }

    /// Reads a comma-separated file with a header row.
    ///
    /// Cells that are empty, `NA` or `NaN` are missing. Every unparseable cell
    /// is reported with its line number; a missing target value is fatal.
    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, schema, &path.display().to_string())
    }

    pub fn read_csv(reader: impl std::io::Read, schema: &Schema, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: HashMap<String, usize> = rdr
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        let locate = |name: &str| {
            header.get(name).copied().ok_or_else(|| {
                Error::Config(format!("{source}: column {name:?} not found in header"))
            })
        };
        let target_idx = locate(&schema.target)?;
        let id_idx = schema.id_column.as_deref().map(locate).transpose()?;
        let col_idx = schema
            .columns
            .iter()
            .map(|(name, _)| locate(name))
            .collect::<Result<Vec<_>>>()?;

        let mut data: Vec<ColumnData> = schema
            .columns
            .iter()
            .map(|(_, kind)| match kind {
                ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
                ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
            })
            .collect();
        let mut target = Vec::new();
        let mut ids = Vec::new();
        let mut problems = Vec::new();

        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(row as u64 + 2);
            let cell = |i: usize| record.get(i).unwrap_or("").trim();

            let t = cell(target_idx);
            if is_missing(t) {
                return Err(Error::Parse {
                    path: source.to_string(),
                    problems: vec![format!("line {line}: missing target {:?}", schema.target)],
                });
            }
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => target.push(v),
                _ => problems.push(format!("line {line}: target {:?} is not a number: {t:?}", schema.target)),
            }
            ids.push(match id_idx {
                Some(i) => cell(i).to_string(),
                None => (row + 1).to_string(),
            });

            for (((name, _), &ci), col) in schema.columns.iter().zip(&col_idx).zip(&mut data) {
                let raw = cell(ci);
                match col {
                    ColumnData::Numeric(v) => {
                        if is_missing(raw) {
                            v.push(None);
                        } else {
                            match raw.parse::<f64>() {
                                Ok(x) if !x.is_nan() => v.push(Some(x)),
                                _ => {
                                    problems.push(format!(
                                        "line {line}: column {name:?} is not numeric: {raw:?}"
                                    ));
                                    v.push(None);
                                }
                            }
                        }
                    }
                    ColumnData::Categorical(v) => {
                        v.push((!is_missing(raw)).then(|| raw.to_string()));
                    }
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Parse {
                path: source.to_string(),
                problems,
            });
        }
        let columns = schema
            .columns
            .iter()
            .zip(data)
            .map(|((name, _), data)| Column {
                name: name.clone(),
                data,
            })
            .collect();
        let mut ds = Self::new(columns, schema.target.clone(), target, ids)?;
        ds.id_column = schema.id_column.clone();
        Ok(ds)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv(file)?;
        Ok(())
    }

    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let id_name = self.id_column.as_deref().unwrap_or("record_id");
        let mut header = vec![id_name.to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for row in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.record_ids[row].clone());
            rec.extend(self.columns.iter().map(|c| c.data.cell(row)));
            rec.push(self.target[row].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Schema that reads back what [`RawDataset::write_csv`] writes.
    pub fn schema(&self) -> Schema {
        Schema {
            columns: self
                .columns
                .iter()
                .map(|c| (c.name.clone(), c.data.kind()))
                .collect(),
            target: self.target_name.clone(),
            id_column: Some(self.id_column.clone().unwrap_or_else(|| "record_id".into())),
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn row_count(&self) -> usize {
        self.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn id_column(&self) -> Option<&str> {
        self.id_column.as_deref()
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

    pub fn row(&self, index: usize) -> RawRow<'_> {
        RawRow { data: self, index }
    }

    pub fn position_of(&self, record_id: &str) -> Option<usize> {
        self.record_ids.iter().position(|id| id == record_id)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> RawDataset {
        RawDataset {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    data: c.data.subset(indices),
                })
                .collect(),
            target_name: self.target_name.clone(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            record_ids: indices.iter().map(|&i| self.record_ids[i].clone()).collect(),
            id_column: self.id_column.clone(),
        }
    }

    /// Equal-weight concatenation of two datasets with identical columns.
    pub fn concat(&self, other: &RawDataset) -> Result<RawDataset> {
        if self.target_name != other.target_name {
            return Err(Error::Structure(format!(
                "targets differ: {} vs {}",
                self.target_name, other.target_name
            )));
        }
        let mut columns = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let o = other.column(&c.name).ok_or_else(|| {
                Error::Structure(format!("column {} missing from second dataset", c.name))
            })?;
            let data = match (&c.data, &o.data) {
                (ColumnData::Numeric(a), ColumnData::Numeric(b)) => {
                    ColumnData::Numeric(a.iter().chain(b).copied().collect())
                }
                (ColumnData::Categorical(a), ColumnData::Categorical(b)) => {
                    ColumnData::Categorical(a.iter().chain(b).cloned().collect())
                }
                _ => {
                    return Err(Error::Structure(format!(
                        "column {} has different types in the two datasets",
                        c.name
                    )))
                }
            };
            columns.push(Column {
                name: c.name.clone(),
                data,
            });
        }
        let target = self.target.iter().chain(&other.target).copied().collect();
        let ids = self
            .record_ids
            .iter()
            .chain(&other.record_ids)
            .cloned()
            .collect();
        let mut out = RawDataset::new(columns, self.target_name.clone(), target, ids)?;
        out.id_column = self.id_column.clone();
        Ok(out)
    }

    pub fn mean_target(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.target.iter().sum::<f64>() / self.len() as f64)
    }
}

/// Borrowed view of one raw record.
#[derive(Debug, Clone, Copy)]
pub struct RawRow<'a> {
    data: &'a RawDataset,
    index: usize,
}

impl RawRow<'_> {
    pub fn record_id(&self) -> &str {
        &self.data.record_ids[self.index]
    }

    pub fn target(&self) -> f64 {
        self.data.target[self.index]
    }
}

impl RowView for RawRow<'_> {
    fn numeric(&self, variable: &str) -> Option<f64> {
        match &self.data.column(variable)?.data {
            ColumnData::Numeric(v) => v[self.index],
            ColumnData::Categorical(v) => v[self.index].as_deref()?.parse().ok(),
        }
    }

    fn categorical(&self, variable: &str) -> Option<String> {
        match &self.data.column(variable)?.data {
            ColumnData::Numeric(v) => v[self.index].map(|x| x.to_string()),
            ColumnData::Categorical(v) => v[self.index].clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            columns: vec![
                ("cscore".into(), ColumnKind::Numeric),
                ("dti".into(), ColumnKind::Numeric),
                ("purpose".into(), ColumnKind::Categorical),
            ],
            target: "default".into(),
            id_column: Some("loan_id".into()),
        }
    }

    #[test]
    fn reads_small_fixture() {
        let text = "loan_id,cscore,dti,purpose,default\n\
                    a,690,43,P,1\n\
                    b,,20,C,0\n\
                    c,750,35,,0\n";
        let ds = RawDataset::read_csv(text.as_bytes(), &schema(), "fixture").unwrap();
        assert_eq!(ds.row_count(), 3);
        assert_eq!(ds.record_ids(), ["a", "b", "c"]);
        match &ds.column("cscore").unwrap().data {
            ColumnData::Numeric(v) => assert_eq!(v, &[Some(690.0), None, Some(750.0)]),
            _ => panic!("cscore should be numeric"),
        }
        match &ds.column("purpose").unwrap().data {
            ColumnData::Categorical(v) => assert_eq!(v[2], None),
            _ => panic!("purpose should be categorical"),
        }
        assert!(ds.target_is_binary());
    }

    #[test]
    fn reports_bad_cells_by_line() {
        let text = "loan_id,cscore,dti,purpose,default\n\
                    a,690,43,P,1\n\
                    b,abc,20,C,0\n";
        let err = RawDataset::read_csv(text.as_bytes(), &schema(), "fixture").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("cscore"), "{msg}");
    }

    #[test]
    fn missing_target_is_fatal() {
        let text = "loan_id,cscore,dti,purpose,default\na,690,43,P,\n";
        assert!(matches!(
            RawDataset::read_csv(text.as_bytes(), &schema(), "fixture"),
            Err(Error::Parse { .. })
        ));
        let no_col = "loan_id,cscore,dti,purpose\na,690,43,P\n";
        assert!(matches!(
            RawDataset::read_csv(no_col.as_bytes(), &schema(), "fixture"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let text = "loan_id,cscore,dti,purpose,default\n\
                    a,690.5,43,P,1\n\
                    b,,20,C,0\n";
        let ds = RawDataset::read_csv(text.as_bytes(), &schema(), "fixture").unwrap();
        let mut out = Vec::new();
        ds.to_csv(&mut out).unwrap();
        let back = RawDataset::read_csv(out.as_slice(), &ds.schema(), "again").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn concat_and_subset() {
        let text = "loan_id,cscore,dti,purpose,default\na,690,43,P,1\nb,700,20,C,0\n";
        let a = RawDataset::read_csv(text.as_bytes(), &schema(), "a").unwrap();
        let text2 = "loan_id,cscore,dti,purpose,default\nc,710,30,R,0\n";
        let b = RawDataset::read_csv(text2.as_bytes(), &schema(), "b").unwrap();
        let c = a.concat(&b).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.subset(&[2, 0]).record_ids(), ["c", "a"]);
        // duplicate ids are refused
        assert!(a.concat(&a).is_err());
    }
}
