//! Binning and grouping of raw variables into one-hot binary features.
//!
//! Numeric bins are half-open: with cuts `c1 < ... < ck` the bins are
//! `x < c1`, `[c1, c2)`, ..., `x >= ck`, so they cover the whole real line.
//! Categorical variables map each category group to one feature, with a
//! trailing `other` feature collecting pooled and unseen categories. A missing
//! raw value leaves every bit of its variable at 0.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binary::BinaryDataset;
use super::raw::{ColumnData, ColumnKind, RawDataset, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Quantile,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub members: Vec<String>,
}

impl GroupSpec {
    pub fn named(name: &str, members: &[&str]) -> Self {
        Self {
            name: Some(name.into()),
            members: members.iter().map(|m| m.to_string()).collect(),
        }
    }

    pub fn of(members: &[&str]) -> Self {
        Self {
            name: None,
            members: members.iter().map(|m| m.to_string()).collect(),
        }
    }
}

/// Per-variable entry of a [`DataConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableConfig {
    pub name: String,
    pub kind: ColumnKind,
    /// Explicit cut points (numeric).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<f64>>,
    /// Quantile bin count (numeric), overriding the config default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Explicit category groups (categorical).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<GroupSpec>>,
}

impl VariableConfig {
    pub fn numeric(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            cuts: None,
            bins: None,
            groups: None,
        }
    }

    pub fn categorical(name: &str) -> Self {
        Self {
            kind: ColumnKind::Categorical,
            ..Self::numeric(name)
        }
    }

    pub fn with_cuts(mut self, cuts: &[f64]) -> Self {
        self.cuts = Some(cuts.to_vec());
        self
    }

    pub fn with_bins(mut self, bins: usize) -> Self {
        self.bins = Some(bins);
        self
    }

    pub fn with_groups(mut self, groups: Vec<GroupSpec>) -> Self {
        self.groups = Some(groups);
        self
    }
}

fn default_bins() -> usize {
    4
}

fn default_rare() -> f64 {
    0.01
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Declarative data configuration: schema, binning and splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    pub variables: Vec<VariableConfig>,
    #[serde(default)]
    pub strategy: Strategy,
    /// Default quantile bin count.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Categories rarer than this fraction of non-missing rows are pooled into `other`.
    #[serde(default = "default_rare")]
    pub rare_threshold: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DataConfig {
    pub fn new(target: &str, variables: Vec<VariableConfig>) -> Self {
        Self {
            target: target.into(),
            id_column: None,
            variables,
            strategy: Strategy::Quantile,
            bins: default_bins(),
            rare_threshold: default_rare(),
            test_fraction: default_test_fraction(),
            seed: 0,
        }
    }

    pub fn schema(&self) -> Schema {
        Schema {
            columns: self
                .variables
                .iter()
                .map(|v| (v.name.clone(), v.kind))
                .collect(),
            target: self.target.clone(),
            id_column: self.id_column.clone(),
        }
    }

    /// Loads a `.json` or `.toml` file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_config(path)
    }
}

/// Fitted binning of one raw variable.
#[derive(Debug, Clone, PartialEq)]
pub enum VariableBinning {
    Numeric { name: String, cuts: Vec<f64> },
    Categorical { name: String, groups: Vec<GroupSpec> },
}

impl VariableBinning {
    pub fn name(&self) -> &str {
        match self {
            VariableBinning::Numeric { name, .. } | VariableBinning::Categorical { name, .. } => name,
        }
    }

    /// Generated feature names, in bit order.
    pub fn feature_names(&self) -> Vec<String> {
        match self {
            VariableBinning::Numeric { name, cuts } => numeric_feature_names(name, cuts),
            VariableBinning::Categorical { name, groups } => {
                let mut out: Vec<String> = groups.iter().map(|g| group_feature_name(name, g)).collect();
                out.push(format!("{name}=other"));
                out
            }
        }
    }
}

fn numeric_feature_names(name: &str, cuts: &[f64]) -> Vec<String> {
    match cuts {
        [] => vec![format!("{name}:all")],
        _ => {
            let mut out = vec![format!("{name}<{}", cuts[0])];
            for w in cuts.windows(2) {
                out.push(format!("{name} in [{},{})", w[0], w[1]));
            }
            out.push(format!("{name}>={}", cuts[cuts.len() - 1]));
            out
        }
    }
}

fn group_feature_name(var: &str, group: &GroupSpec) -> String {
    match (&group.name, group.members.as_slice()) {
        (Some(n), _) => format!("{var}={n}"),
        (None, [single]) => format!("{var}={single}"),
        (None, members) => format!("{var} in [{}]", members.join(",")),
    }
}

/// A fitted discretizer. Serializes as a [`DataConfig`] with explicit cuts
/// and groups, so it can be fed back in as configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DataConfig", into = "DataConfig")]
pub struct DiscretizationSpec {
    pub target: String,
    pub id_column: Option<String>,
    pub variables: Vec<VariableBinning>,
}

impl DiscretizationSpec {
    pub fn new(target: &str, variables: Vec<VariableBinning>) -> Result<Self> {
        let spec = Self {
            target: target.into(),
            id_column: None,
            variables,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let mut seen_vars = HashSet::new();
        for v in &self.variables {
            if !seen_vars.insert(v.name()) {
                return Err(Error::Config(format!("variable {} listed twice", v.name())));
            }
            match v {
                VariableBinning::Numeric { name, cuts } => check_cuts(name, cuts)?,
                VariableBinning::Categorical { name, groups } => {
                    let mut seen = HashSet::new();
                    for m in groups.iter().flat_map(|g| &g.members) {
                        if !seen.insert(m) {
                            return Err(Error::Config(format!(
                                "{name}: category {m:?} appears in more than one group"
                            )));
                        }
                    }
                }
            }
        }
        let names = self.feature_names();
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Config(format!("duplicate feature name {dup:?}")));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.variables.iter().flat_map(|v| v.feature_names()).collect()
    }

    /// Raw variable behind each feature.
    pub fn feature_sources(&self) -> Vec<String> {
        self.variables
            .iter()
            .flat_map(|v| {
                let n = v.feature_names().len();
                std::iter::repeat_n(v.name().to_string(), n)
            })
            .collect()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableBinning> {
        self.variables.iter().find(|v| v.name() == name)
    }

    pub fn schema(&self) -> Schema {
        DataConfig::from(self.clone()).schema()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_config(path)
    }
}

fn check_cuts(name: &str, cuts: &[f64]) -> Result<()> {
    if cuts.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config(format!("{name}: cut points must be finite")));
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "{name}: cut points must be strictly increasing, got {cuts:?}"
        )));
    }
    Ok(())
}

impl From<DiscretizationSpec> for DataConfig {
    fn from(spec: DiscretizationSpec) -> Self {
        let variables = spec
            .variables
            .into_iter()
            .map(|v| match v {
                VariableBinning::Numeric { name, cuts } => VariableConfig {
                    name,
                    kind: ColumnKind::Numeric,
                    cuts: Some(cuts),
                    bins: None,
                    groups: None,
                },
                VariableBinning::Categorical { name, groups } => VariableConfig {
                    name,
                    kind: ColumnKind::Categorical,
                    cuts: None,
                    bins: None,
                    groups: Some(groups),
                },
            })
            .collect();
        DataConfig {
            id_column: spec.id_column,
            strategy: Strategy::Explicit,
            ..DataConfig::new(&spec.target, variables)
        }
    }
}

impl TryFrom<DataConfig> for DiscretizationSpec {
    type Error = Error;

    fn try_from(cfg: DataConfig) -> Result<Self> {
        let variables = cfg
            .variables
            .into_iter()
            .map(|v| match v.kind {
                ColumnKind::Numeric => v
                    .cuts
                    .map(|cuts| VariableBinning::Numeric {
                        name: v.name.clone(),
                        cuts,
                    })
                    .ok_or_else(|| Error::Config(format!("{}: fitted spec needs cuts", v.name))),
                ColumnKind::Categorical => Ok(VariableBinning::Categorical {
                    name: v.name.clone(),
                    groups: v.groups.unwrap_or_default(),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut spec = DiscretizationSpec::new(&cfg.target, variables)?;
        spec.id_column = cfg.id_column;
        Ok(spec)
    }
}

/// Empirical quantile cuts: the sorted value at index `floor(j * n / bins)`
/// for `j = 1..bins`, dropping duplicates and cuts at the minimum.
pub fn quantile_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Vec::new();
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut cuts: Vec<f64> = Vec::new();
    for j in 1..bins {
        let c = v[(j * n / bins).min(n - 1)];
        if c > v[0] && cuts.last().is_none_or(|&last| c > last) {
            cuts.push(c);
        }
    }
    cuts
}

/// Fits cut points and category groups on `data`.
pub fn fit_discretizer(data: &RawDataset, config: &DataConfig) -> Result<DiscretizationSpec> {
    if config.bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&config.rare_threshold) {
        return Err(Error::Config("rare_threshold must lie in [0, 1)".into()));
    }
    let mut variables = Vec::with_capacity(config.variables.len());
    for vc in &config.variables {
        let column = data
            .column(&vc.name)
            .ok_or_else(|| Error::Config(format!("variable {} not in dataset", vc.name)))?;
        let binning = match (&column.data, vc.kind) {
            (ColumnData::Numeric(values), ColumnKind::Numeric) => {
                let cuts = match (&vc.cuts, config.strategy) {
                    (Some(cuts), _) => {
                        check_cuts(&vc.name, cuts)?;
                        cuts.clone()
                    }
                    (None, Strategy::Explicit) => {
                        return Err(Error::Config(format!(
                            "{}: explicit strategy needs cuts",
                            vc.name
                        )))
                    }
                    (None, Strategy::Quantile) => {
                        let observed: Vec<f64> = values.iter().flatten().copied().collect();
                        let cuts = quantile_cuts(&observed, vc.bins.unwrap_or(config.bins));
                        if cuts.is_empty() {
                            log::warn!(
                                "{}: fewer than two distinct values; using a single pass-through bin",
                                vc.name
                            );
                        }
                        cuts
                    }
                };
                VariableBinning::Numeric {
                    name: vc.name.clone(),
                    cuts,
                }
            }
            (ColumnData::Categorical(values), ColumnKind::Categorical) => {
                let explicit = vc.groups.clone().unwrap_or_default();
                let taken: HashSet<&str> = explicit
                    .iter()
                    .flat_map(|g| g.members.iter().map(String::as_str))
                    .collect();
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for v in values.iter().flatten() {
                    *counts.entry(v.as_str()).or_default() += 1;
                }
                let observed: usize = counts.values().sum();
                let mut groups = explicit.clone();
                if config.strategy == Strategy::Quantile || vc.groups.is_none() {
                    for (cat, count) in &counts {
                        if taken.contains(cat) || *cat == "other" {
                            continue;
                        }
                        if *count as f64 >= config.rare_threshold * observed as f64 {
                            groups.push(GroupSpec::of(&[cat]));
                        }
                    }
                }
                VariableBinning::Categorical {
                    name: vc.name.clone(),
                    groups,
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "variable {} is configured as {:?} but the column has another type",
                    vc.name, vc.kind
                )))
            }
        };
        variables.push(binning);
    }
    let mut spec = DiscretizationSpec::new(&config.target, variables)?;
    spec.id_column = config.id_column.clone();
    Ok(spec)
}

/// Counts of notable events during [`transform`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    /// Infinite numeric values assigned to an edge bin.
    pub clamped: usize,
    /// Missing values per variable.
    pub missing: BTreeMap<String, usize>,
    /// Category values not seen at fit time, mapped to `other`.
    pub unseen_categories: usize,
}

pub fn transform(spec: &DiscretizationSpec, data: &RawDataset) -> Result<BinaryDataset> {
    transform_with_report(spec, data).map(|(ds, _)| ds)
}

/// One-hot encodes `data`; the target is copied through.
pub fn transform_with_report(
    spec: &DiscretizationSpec,
    data: &RawDataset,
) -> Result<(BinaryDataset, TransformReport)> {
    let names = spec.feature_names();
    let width = names.len();
    let n = data.len();
    let mut bits = vec![false; width * n];
    let mut report = TransformReport::default();
    let mut offset = 0;
    for var in &spec.variables {
        let column = data
            .column(var.name())
            .ok_or_else(|| Error::Structure(format!("dataset lacks variable {}", var.name())))?;
        let mut missing = 0;
        match (var, &column.data) {
            (VariableBinning::Numeric { cuts, .. }, ColumnData::Numeric(values)) => {
                for (row, value) in values.iter().enumerate() {
                    match value {
                        None => missing += 1,
                        Some(x) => {
                            if x.is_infinite() {
                                report.clamped += 1;
                            }
                            let bin = cuts.partition_point(|&c| c <= *x);
                            bits[row * width + offset + bin] = true;
                        }
                    }
                }
            }
            (VariableBinning::Categorical { groups, .. }, ColumnData::Categorical(values)) => {
                let lookup: HashMap<&str, usize> = groups
                    .iter()
                    .enumerate()
                    .flat_map(|(g, grp)| grp.members.iter().map(move |m| (m.as_str(), g)))
                    .collect();
                let other = groups.len();
                for (row, value) in values.iter().enumerate() {
                    match value {
                        None => missing += 1,
                        Some(v) => {
                            let g = match lookup.get(v.as_str()) {
                                Some(&g) => g,
                                None => {
                                    report.unseen_categories += 1;
                                    other
                                }
                            };
                            bits[row * width + offset + g] = true;
                        }
                    }
                }
            }
            _ => {
                return Err(Error::Structure(format!(
                    "variable {} has a different type than at fit time",
                    var.name()
                )))
            }
        }
        if missing > 0 {
            report.missing.insert(var.name().to_string(), missing);
        }
        offset += var.feature_names().len();
    }
    let ds = BinaryDataset::new(
        bits,
        names,
        spec.feature_sources(),
        data.target().to_vec(),
        data.record_ids().to_vec(),
    )?;
    Ok((ds, report))
}
