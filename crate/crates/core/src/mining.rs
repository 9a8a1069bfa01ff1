//! Association-style rule mining over a binary dataset.
//!
//! Candidates are single features and, at depth 2, pairs of features derived
//! from different raw variables. Each candidate is ranked by how strongly its
//! trigger set separates the target, weighted by support.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{feature_columns, BitColumn};
use crate::data::BinaryDataset;
use crate::error::{Error, Result};
use crate::model::{Literal, Mode, Rule, RuleModel, DEFAULT_SCALE};

fn default_depth() -> usize {
    1
}

fn default_min_support() -> f64 {
    0.01
}

fn default_cap() -> usize {
    3
}

fn default_scale() -> f64 {
    DEFAULT_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Number of rules besides the intercept.
    pub max_rules: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_support")]
    pub min_support: f64,
    /// Most rules any one raw variable may appear in.
    #[serde(default = "default_cap")]
    pub per_variable_cap: usize,
    /// Points scaling factor of the mined model.
    #[serde(default = "default_scale")]
    pub scale_a: f64,
}

impl MiningConfig {
    pub fn new(max_rules: usize) -> Result<Self> {
        let cfg = Self {
            max_rules,
            max_depth: default_depth(),
            min_support: default_min_support(),
            per_variable_cap: default_cap(),
            scale_a: default_scale(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn with_min_support(mut self, min_support: f64) -> Self {
        self.min_support = min_support;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.per_variable_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rules == 0 {
            return Err(Error::Config("max_rules must be at least 1".into()));
        }
        if !(1..=2).contains(&self.max_depth) {
            return Err(Error::Config(format!(
                "max_depth must be 1 or 2, got {}",
                self.max_depth
            )));
        }
        if !(self.min_support > 0.0 && self.min_support < 1.0) {
            return Err(Error::Config(format!(
                "min_support must lie in (0, 1), got {}",
                self.min_support
            )));
        }
        if self.per_variable_cap == 0 {
            return Err(Error::Config("per_variable_cap must be at least 1".into()));
        }
        if !(self.scale_a > 0.0 && self.scale_a.is_finite()) {
            return Err(Error::Config("scale_a must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRule {
    pub premise: Vec<Literal>,
    pub label: String,
    pub support: f64,
    /// Mean target over triggering records.
    pub target_rate: f64,
    pub strength: f64,
}

/// Strength ordering: strength desc, support desc, premise ascending.
fn rank(a: &CandidateRule, b: &CandidateRule) -> Ordering {
    b.strength
        .total_cmp(&a.strength)
        .then_with(|| b.support.total_cmp(&a.support))
        .then_with(|| a.premise.cmp(&b.premise))
}

struct TargetStats {
    binary: bool,
    total: f64,
    positives: f64,
    n: f64,
}

fn score(
    premise: Vec<Literal>,
    trigger: &BitColumn,
    target: &[f64],
    stats: &TargetStats,
    names: &[String],
) -> CandidateRule {
    let count = trigger.count() as f64;
    let sum: f64 = trigger.ones_iter().map(|i| target[i]).sum();
    let support = count / stats.n;
    let rate = sum / count;
    let strength = if stats.binary {
        // 2x2 table with +0.5 in every cell
        let a = sum + 0.5;
        let b = count - sum + 0.5;
        let c = stats.positives - sum + 0.5;
        let d = (stats.n - count) - (stats.positives - sum) + 0.5;
        ((a / b) / (c / d)).ln().abs() * support
    } else {
        (rate - stats.total / stats.n).abs() * support
    };
    let label = premise
        .iter()
        .map(|l| names[l.feature].as_str())
        .collect::<Vec<_>>()
        .join(" & ");
    CandidateRule {
        premise,
        label,
        support,
        target_rate: rate,
        strength,
    }
}

/// All admissible candidates, ranked.
///
/// A candidate needs support of at least `min_support` and must not trigger on
/// every record (such a rule duplicates the intercept).
pub fn enumerate_candidates(data: &BinaryDataset, config: &MiningConfig) -> Result<Vec<CandidateRule>> {
    config.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Size("cannot mine an empty dataset".into()));
    }
    let target = data.target();
    let total: f64 = target.iter().sum();
    if target.iter().all(|&t| t == target[0]) {
        log::warn!("target has zero variance; no candidate rules");
        return Ok(Vec::new());
    }
    let stats = TargetStats {
        binary: data.target_is_binary(),
        total,
        positives: total,
        n: n as f64,
    };
    let cols = feature_columns(data);
    let names = data.feature_names();
    let sources = data.feature_sources();
    let min_count = config.min_support * n as f64;
    let admissible = |count: usize| count > 0 && count < n && count as f64 >= min_count;

    let singles: Vec<usize> = (0..cols.len()).filter(|&j| admissible(cols[j].count())).collect();
    let mut candidates: Vec<CandidateRule> = singles
        .par_iter()
        .map(|&j| score(vec![Literal::positive(j)], &cols[j], target, &stats, names))
        .collect();

    if config.max_depth >= 2 {
        let pairs: Vec<(usize, usize)> = singles
            .iter()
            .enumerate()
            .flat_map(|(k, &i)| singles[k + 1..].iter().map(move |&j| (i, j)))
            .filter(|&(i, j)| sources[i] != sources[j])
            .collect();
        let more: Vec<CandidateRule> = pairs
            .par_iter()
            .filter_map(|&(i, j)| {
                let both = cols[i].and(&cols[j]);
                admissible(both.count()).then(|| {
                    score(
                        vec![Literal::positive(i), Literal::positive(j)],
                        &both,
                        target,
                        &stats,
                        names,
                    )
                })
            })
            .collect();
        candidates.extend(more);
    }
    candidates.sort_by(rank);
    Ok(candidates)
}

/// Walks the ranked candidates once, keeping those that respect the
/// per-variable cap, until `max_rules` are chosen. A larger `max_rules` only
/// ever appends to the selection.
pub fn select_candidates(data: &BinaryDataset, config: &MiningConfig) -> Result<Vec<CandidateRule>> {
    let candidates = enumerate_candidates(data, config)?;
    let sources = data.feature_sources();
    let mut used: HashMap<&str, usize> = HashMap::new();
    let mut chosen: Vec<CandidateRule> = Vec::new();
    for cand in candidates {
        if chosen.len() == config.max_rules {
            break;
        }
        let vars: Vec<&str> = cand.premise.iter().map(|l| sources[l.feature].as_str()).collect();
        if vars
            .iter()
            .any(|v| used.get(v).copied().unwrap_or(0) >= config.per_variable_cap)
        {
            continue;
        }
        for v in vars {
            *used.entry(v).or_default() += 1;
        }
        chosen.push(cand);
    }
    if chosen.len() < config.max_rules {
        log::warn!(
            "only {} candidate rules available, {} requested",
            chosen.len(),
            config.max_rules
        );
    }
    Ok(chosen)
}

/// Uncalibrated model from selected candidates: every weight 0.5, rules
/// `R-01..` in the given order, then the intercept.
pub fn model_from_candidates(
    chosen: &[CandidateRule],
    feature_names: &[String],
    mode: Mode,
    scale_a: f64,
) -> Result<RuleModel> {
    let width = (chosen.len() + 1).to_string().len().max(2);
    let mut rules = Vec::with_capacity(chosen.len() + 1);
    for (k, cand) in chosen.iter().enumerate() {
        let mut rule = Rule::new(
            format!("R-{:0width$}", k + 1),
            cand.label.clone(),
            cand.premise.clone(),
            0.5,
        )?;
        rule.mined_strength = Some(cand.strength);
        rules.push(rule);
    }
    rules.push(Rule::intercept(format!("R-{:0width$}", rules.len() + 1), 0.5)?);
    RuleModel::new(rules, scale_a, mode, feature_names.to_vec())
}

/// [`select_candidates`] then [`model_from_candidates`]; classifier for a 0/1
/// target, regressor otherwise.
pub fn mine_rules(data: &BinaryDataset, config: &MiningConfig) -> Result<RuleModel> {
    let chosen = select_candidates(data, config)?;
    let mode = if data.target_is_binary() {
        Mode::Classifier
    } else {
        Mode::Regressor
    };
    model_from_candidates(&chosen, data.feature_names(), mode, config.scale_a)
}
