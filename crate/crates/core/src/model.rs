//! Probabilistic rule models: propositional Markov logic restricted to
//! association rules `premise => y` plus a premise-free intercept rule.
//!
//! Each rule carries a weight `psi` in (0, 1). A rule whose premise holds on a
//! record *triggers*; triggered rules multiply the odds of the target by
//! `psi / (1 - psi)` and non-triggered rules contribute nothing. In points
//! notation a rule is worth `p = -a ln(psi / (1 - psi))`, so positive points
//! lower the target probability (raise repayment, for a default target) and
//! the model score is the intercept's points plus the points of every other
//! triggered rule.
//!
//! Inference is closed form. [`crate::oracle`] keeps a brute-force joint
//! enumeration that the tests use to check it.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::BinaryDataset;
use crate::error::{Error, Result};

/// Weights are kept inside `[WEIGHT_FLOOR, 1 - WEIGHT_FLOOR]` so log-odds stay finite.
pub const WEIGHT_FLOOR: f64 = 1e-9;

/// Default points scaling factor; with `a = 1` points are negative log-odds.
pub const DEFAULT_SCALE: f64 = 1.0;

/// Tolerance used when checking serialized points against the weights they
/// were derived from.
const POINTS_CHECK_TOL: f64 = 1e-9;

/// Points worth of a rule weight: `-scale_a * ln(weight / (1 - weight))`.
pub fn points_from_weight(weight: f64, scale_a: f64) -> Result<f64> {
    check_scale(scale_a)?;
    if !weight.is_finite() || weight <= 0.0 || weight >= 1.0 {
        return Err(Error::Domain(format!(
            "rule weight must lie in the open interval (0, 1), got {weight}"
        )));
    }
    Ok(-scale_a * logit(weight))
}

/// Inverse of [`points_from_weight`]: `1 / (1 + exp(points / scale_a))`.
pub fn weight_from_points(points: f64, scale_a: f64) -> Result<f64> {
    check_scale(scale_a)?;
    if !points.is_finite() {
        return Err(Error::Domain(format!("points must be finite, got {points}")));
    }
    Ok(sigmoid(-points / scale_a))
}

fn check_scale(scale_a: f64) -> Result<()> {
    if !scale_a.is_finite() || scale_a <= 0.0 {
        return Err(Error::Domain(format!(
            "scaling factor must be positive and finite, got {scale_a}"
        )));
    }
    Ok(())
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(p / (1 - p))` without range checks.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub feature: usize,
    pub expected: bool,
}

impl Literal {
    pub fn new(feature: usize, expected: bool) -> Self {
        Self { feature, expected }
    }

    pub fn positive(feature: usize) -> Self {
        Self::new(feature, true)
    }
}

/// Classifier models predict `P(y = 1 | e)`; regressors predict a real value
/// in points space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classifier,
    Regressor,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Classifier => f.write_str("classifier"),
            Mode::Regressor => f.write_str("regressor"),
        }
    }
}

/// A weighted association rule. An empty premise makes it the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub label: String,
    pub premise: Vec<Literal>,
    weight: f64,
    clamped: bool,
    /// Ranking score assigned by the miner, if the rule was mined.
    pub mined_strength: Option<f64>,
}

impl Rule {
    /// Builds a rule. Weights at or beyond `WEIGHT_FLOOR` of 0 or 1 are clamped
    /// and the rule is flagged (see [`Rule::was_clamped`]).
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        premise: Vec<Literal>,
        weight: f64,
    ) -> Result<Self> {
        let id = id.into();
        let (weight, clamped) = clamp_weight(weight).map_err(|e| match e {
            Error::Domain(msg) => Error::Domain(format!("rule {id}: {msg}")),
            other => other,
        })?;
        if clamped {
            log::warn!("rule {id}: weight clamped to {weight}");
        }
        Ok(Self {
            id,
            label: label.into(),
            premise,
            weight,
            clamped,
            mined_strength: None,
        })
    }

    pub fn intercept(id: impl Into<String>, weight: f64) -> Result<Self> {
        Self::new(id, "-", Vec::new(), weight)
    }

    pub fn from_points(
        id: impl Into<String>,
        label: impl Into<String>,
        premise: Vec<Literal>,
        points: f64,
        scale_a: f64,
    ) -> Result<Self> {
        Self::new(id, label, premise, weight_from_points(points, scale_a)?)
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Log-odds form of the weight, `ln(psi / (1 - psi))`.
    pub fn log_odds(&self) -> f64 {
        logit(self.weight)
    }

    pub fn points(&self, scale_a: f64) -> f64 {
        -scale_a * logit(self.weight)
    }

    pub fn is_intercept(&self) -> bool {
        self.premise.is_empty()
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        let (weight, clamped) = clamp_weight(weight)?;
        self.weight = weight;
        self.clamped = clamped;
        Ok(self)
    }

    /// True iff every literal of the premise matches the record.
    pub fn triggers(&self, record: &[bool]) -> Result<bool> {
        for lit in &self.premise {
            match record.get(lit.feature) {
                Some(&bit) if bit == lit.expected => {}
                Some(_) => return Ok(false),
                None => {
                    return Err(Error::Structure(format!(
                        "rule {} references feature {} but the record has {} features",
                        self.id,
                        lit.feature,
                        record.len()
                    )))
                }
            }
        }
        Ok(true)
    }

    /// [`Rule::triggers`] for records already checked against the model width.
    #[inline]
    pub(crate) fn fires(&self, record: &[bool]) -> bool {
        self.premise
            .iter()
            .all(|lit| record[lit.feature] == lit.expected)
    }
}

fn clamp_weight(weight: f64) -> Result<(f64, bool)> {
    if !weight.is_finite() || !(0.0..=1.0).contains(&weight) {
        return Err(Error::Domain(format!(
            "weight must be a probability, got {weight}"
        )));
    }
    let clamped = weight.clamp(WEIGHT_FLOOR, 1.0 - WEIGHT_FLOOR);
    Ok((clamped, clamped != weight))
}

/// One rule's share of an explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub rule_id: String,
    pub label: String,
    pub triggered: bool,
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub record_id: String,
    pub contributions: Vec<Contribution>,
    pub total_points: f64,
    /// Present for classifiers only.
    pub probability: Option<f64>,
}

/// An immutable probabilistic rule model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct RuleModel {
    rules: Vec<Rule>,
    scale_a: f64,
    mode: Mode,
    feature_names: Vec<String>,
}

impl RuleModel {
    pub fn new(
        rules: Vec<Rule>,
        scale_a: f64,
        mode: Mode,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        check_scale(scale_a)?;
        let intercepts = rules.iter().filter(|r| r.is_intercept()).count();
        if intercepts != 1 {
            return Err(Error::Structure(format!(
                "a model needs exactly one intercept rule, found {intercepts}"
            )));
        }
        let mut seen = BTreeSet::new();
        for rule in &rules {
            if !seen.insert(rule.id.as_str()) {
                return Err(Error::Structure(format!("duplicate rule id {}", rule.id)));
            }
            if let Some(lit) = rule
                .premise
                .iter()
                .find(|lit| lit.feature >= feature_names.len())
            {
                return Err(Error::Structure(format!(
                    "rule {} references feature index {} but the model has {} features",
                    rule.id,
                    lit.feature,
                    feature_names.len()
                )));
            }
        }
        Ok(Self {
            rules,
            scale_a,
            mode,
            feature_names,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn intercept(&self) -> &Rule {
        self.rules
            .iter()
            .find(|r| r.is_intercept())
            .expect("validated at construction")
    }

    pub fn scale_a(&self) -> f64 {
        self.scale_a
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Replaces the rule list, re-running the structural checks.
    pub fn with_rules(&self, rules: Vec<Rule>) -> Result<Self> {
        Self::new(rules, self.scale_a, self.mode, self.feature_names.clone())
    }

    pub fn points(&self) -> Vec<f64> {
        self.rules.iter().map(|r| r.points(self.scale_a)).collect()
    }

    fn check_record(&self, record: &[bool]) -> Result<()> {
        if record.len() != self.feature_names.len() {
            return Err(Error::Structure(format!(
                "record has {} features, model expects {}",
                record.len(),
                self.feature_names.len()
            )));
        }
        Ok(())
    }

    /// Trigger flag per rule, in rule order.
    pub fn triggered(&self, record: &[bool]) -> Result<Vec<bool>> {
        self.check_record(record)?;
        Ok(self.rules.iter().map(|r| r.fires(record)).collect())
    }

    /// Intercept points plus the points of every triggered rule.
    pub fn score_points(&self, record: &[bool]) -> Result<f64> {
        self.check_record(record)?;
        Ok(self.score_unchecked(record))
    }

    fn score_unchecked(&self, record: &[bool]) -> f64 {
        self.rules
            .iter()
            .filter(|r| r.fires(record))
            .map(|r| r.points(self.scale_a))
            .sum()
    }

    /// Log-odds of the target implied by the score, `-score / a`.
    pub fn log_odds(&self, record: &[bool]) -> Result<f64> {
        Ok(-self.score_points(record)? / self.scale_a)
    }

    /// `P(y = 1 | e) = sigmoid(-score / a)`.
    pub fn predict_proba(&self, record: &[bool]) -> Result<f64> {
        if self.mode != Mode::Classifier {
            return Err(Error::Mode(
                "predict_proba needs a classifier model".to_string(),
            ));
        }
        Ok(sigmoid(self.log_odds(record)?))
    }

    /// Regressor output; lives in points space.
    pub fn predict_value(&self, record: &[bool]) -> Result<f64> {
        if self.mode != Mode::Regressor {
            return Err(Error::Mode(
                "predict_value needs a regressor model".to_string(),
            ));
        }
        self.score_points(record)
    }

    pub fn explain(&self, record_id: impl Into<String>, record: &[bool]) -> Result<Explanation> {
        self.check_record(record)?;
        let mut total = 0.0;
        let contributions = self
            .rules
            .iter()
            .map(|r| {
                let triggered = r.fires(record);
                let points = r.points(self.scale_a);
                if triggered {
                    total += points;
                }
                Contribution {
                    rule_id: r.id.clone(),
                    label: r.label.clone(),
                    triggered,
                    points,
                }
            })
            .collect();
        let probability = match self.mode {
            Mode::Classifier => Some(sigmoid(-total / self.scale_a)),
            Mode::Regressor => None,
        };
        Ok(Explanation {
            record_id: record_id.into(),
            contributions,
            total_points: total,
            probability,
        })
    }

    fn check_dataset(&self, data: &BinaryDataset) -> Result<()> {
        if data.feature_count() != self.feature_names.len() {
            return Err(Error::Structure(format!(
                "dataset has {} features, model expects {}",
                data.feature_count(),
                self.feature_names.len()
            )));
        }
        Ok(())
    }

    /// Points score of every record, in dataset order.
    pub fn score_dataset(&self, data: &BinaryDataset) -> Result<Vec<f64>> {
        self.check_dataset(data)?;
        Ok((0..data.len())
            .into_par_iter()
            .map(|i| self.score_unchecked(data.record(i)))
            .collect())
    }

    /// Target log-odds of every record, `-score / a`.
    pub fn log_odds_dataset(&self, data: &BinaryDataset) -> Result<Vec<f64>> {
        let a = self.scale_a;
        Ok(self
            .score_dataset(data)?
            .into_iter()
            .map(|s| -s / a)
            .collect())
    }

    pub fn predict_proba_dataset(&self, data: &BinaryDataset) -> Result<Vec<f64>> {
        if self.mode != Mode::Classifier {
            return Err(Error::Mode(
                "predict_proba needs a classifier model".to_string(),
            ));
        }
        Ok(self
            .log_odds_dataset(data)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Fraction of records on which each rule triggers, in rule order.
    pub fn coverage(&self, data: &BinaryDataset) -> Result<Vec<f64>> {
        self.check_dataset(data)?;
        if data.is_empty() {
            return Ok(vec![0.0; self.rules.len()]);
        }
        let n = data.len() as f64;
        Ok(self
            .rules
            .par_iter()
            .map(|r| (0..data.len()).filter(|&i| r.fires(data.record(i))).count() as f64 / n)
            .collect())
    }
}

// --- JSON document -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiteralDocument {
    pub feature: String,
    pub expected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleDocument {
    pub id: String,
    pub label: String,
    pub premise: Vec<LiteralDocument>,
    pub weight: f64,
    pub points: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mined_strength: Option<f64>,
}

/// Serialized form of a [`RuleModel`]. Literals name their features; the
/// weight is authoritative and `points` is carried for readability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub scale_a: f64,
    pub mode: Mode,
    pub features: Vec<String>,
    pub rules: Vec<RuleDocument>,
}

/// Rounds to nine decimals so stored points read like the reference tables.
fn display_points(points: f64) -> f64 {
    (points * 1e9).round() / 1e9
}

impl From<RuleModel> for ModelDocument {
    fn from(model: RuleModel) -> Self {
        let a = model.scale_a;
        let rules = model
            .rules
            .iter()
            .map(|r| RuleDocument {
                id: r.id.clone(),
                label: r.label.clone(),
                premise: r
                    .premise
                    .iter()
                    .map(|lit| LiteralDocument {
                        feature: model.feature_names[lit.feature].clone(),
                        expected: lit.expected,
                    })
                    .collect(),
                weight: r.weight,
                points: display_points(r.points(a)),
                mined_strength: r.mined_strength,
            })
            .collect();
        ModelDocument {
            scale_a: a,
            mode: model.mode,
            features: model.feature_names,
            rules,
        }
    }
}

impl TryFrom<ModelDocument> for RuleModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        check_scale(doc.scale_a)?;
        let mut rules = Vec::with_capacity(doc.rules.len());
        for rd in doc.rules {
            let premise = rd
                .premise
                .iter()
                .map(|lit| {
                    doc.features
                        .iter()
                        .position(|f| *f == lit.feature)
                        .map(|feature| Literal::new(feature, lit.expected))
                        .ok_or_else(|| {
                            Error::Structure(format!(
                                "rule {} references unknown feature {:?}",
                                rd.id, lit.feature
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rule = Rule::new(rd.id, rd.label, premise, rd.weight)?;
            rule.mined_strength = rd.mined_strength;
            let points = rule.points(doc.scale_a);
            if (points - rd.points).abs() > POINTS_CHECK_TOL {
                return Err(Error::Structure(format!(
                    "rule {}: stored points {} disagree with weight {} (implies {})",
                    rule.id, rd.points, rd.weight, points
                )));
            }
            rules.push(rule);
        }
        RuleModel::new(rules, doc.scale_a, doc.mode, doc.features)
    }
}
