//! What-if analysis: expert overrides on correction rules, portfolio
//! rescoring under the hypothetical regime, and a crisis-likelihood blend.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{band_labels, numeric_column, validate_cuts};
use crate::correction::CorrectionPipeline;
use crate::data::{transform, RawDataset};
use crate::error::{Error, FieldError, Result};
use crate::model::{sigmoid, weight_from_points, Literal, Rule, RuleModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiseLiteral {
    pub feature: String,
    #[serde(default = "yes")]
    pub expected: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    SetPoints { points: f64 },
    ScalePoints { factor: f64 },
    Disable,
    SetPremise { premise: Vec<PremiseLiteral> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub rule: String,
    #[serde(flatten)]
    pub action: Action,
}

/// A named set of rule overrides with an optional crisis likelihood `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub overrides: Vec<Override>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crisis_likelihood: Option<f64>,
}

fn field(field: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
    }
}

impl ScenarioSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            overrides: Vec::new(),
            crisis_likelihood: None,
        }
    }

    pub fn with(mut self, rule: &str, action: Action) -> Self {
        self.overrides.push(Override {
            rule: rule.into(),
            action,
        });
        self
    }

    pub fn with_likelihood(mut self, q: f64) -> Self {
        self.crisis_likelihood = Some(q);
        self
    }

    /// Parses a JSON document; syntax and type errors are reported against
    /// the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Scenario(vec![field(
                if path == "." { String::new() } else { path },
                e.into_inner().to_string(),
            )])
        })
    }

    /// Every problem with this spec against `model`, by field.
    pub fn problems(&self, model: &RuleModel) -> Vec<FieldError> {
        let mut out = Vec::new();
        if let Some(q) = self.crisis_likelihood {
            if !(0.0..=1.0).contains(&q) {
                out.push(field("crisis_likelihood", format!("{q} is not a probability in [0, 1]")));
            }
        }
        let known: Vec<&str> = model.rules().iter().map(|r| r.id.as_str()).collect();
        for (k, o) in self.overrides.iter().enumerate() {
            let at = |name: &str| format!("overrides[{k}].{name}");
            let Some(rule) = model.rule(&o.rule) else {
                out.push(field(
                    at("rule"),
                    format!("unknown rule {}; known rules: {}", o.rule, known.join(", ")),
                ));
                continue;
            };
            match &o.action {
                Action::SetPoints { points } if !points.is_finite() => {
                    out.push(field(at("points"), "points must be finite"));
                }
                Action::ScalePoints { factor } if !factor.is_finite() => {
                    out.push(field(at("factor"), "factor must be finite"));
                }
                Action::SetPremise { premise } => {
                    if rule.is_intercept() {
                        out.push(field(at("premise"), "the intercept rule cannot have a premise"));
                    }
                    if premise.is_empty() {
                        out.push(field(at("premise"), "a premise needs at least one literal"));
                    }
                    for (j, lit) in premise.iter().enumerate() {
                        if model.feature_index(&lit.feature).is_none() {
                            out.push(field(
                                format!("overrides[{k}].premise[{j}].feature"),
                                format!("unknown feature {}", lit.feature),
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn validate(&self, model: &RuleModel) -> Result<()> {
        let problems = self.problems(model);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(problems))
        }
    }
}

fn premise_label(model: &RuleModel, premise: &[Literal]) -> String {
    premise
        .iter()
        .map(|l| {
            let name = &model.feature_names()[l.feature];
            if l.expected {
                name.clone()
            } else {
                format!("not {name}")
            }
        })
        .collect::<Vec<_>>()
        .join(" & ")
}

/// A new model with the overrides applied in order; `model` is untouched.
pub fn apply_overrides(model: &RuleModel, spec: &ScenarioSpec) -> Result<RuleModel> {
    spec.validate(model)?;
    let a = model.scale_a();
    let mut rules: Vec<Rule> = model.rules().to_vec();
    for o in &spec.overrides {
        let rule = rules
            .iter_mut()
            .find(|r| r.id == o.rule)
            .expect("validated above");
        let updated = match &o.action {
            Action::SetPoints { points } => rule.clone().with_weight(weight_from_points(*points, a)?)?,
            Action::ScalePoints { factor } => {
                let points = rule.points(a) * factor;
                rule.clone().with_weight(weight_from_points(points, a)?)?
            }
            Action::Disable => rule.clone().with_weight(0.5)?,
            Action::SetPremise { premise } => {
                let literals: Vec<Literal> = premise
                    .iter()
                    .map(|l| Literal::new(model.feature_index(&l.feature).expect("validated"), l.expected))
                    .collect();
                let mut r = Rule::new(
                    rule.id.clone(),
                    premise_label(model, &literals),
                    literals,
                    rule.weight(),
                )?;
                r.mined_strength = None;
                r
            }
        };
        *rule = updated;
    }
    model.with_rules(rules)
}

/// Per-record `q * p_scenario + (1 - q) * p_base`.
pub fn blend_likelihood(p_base: &[f64], p_scenario: &[f64], q: f64) -> Result<Vec<f64>> {
    if p_base.len() != p_scenario.len() {
        return Err(Error::Structure(format!(
            "{} base probabilities for {} scenario probabilities",
            p_base.len(),
            p_scenario.len()
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("crisis likelihood {q} is not in [0, 1]")));
    }
    Ok(p_base
        .iter()
        .zip(p_scenario)
        .map(|(b, s)| q * s + (1.0 - q) * b)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRates {
    pub band: String,
    pub count: usize,
    pub observed_rate: Option<f64>,
    /// `m1` alone.
    pub base_rate: Option<f64>,
    /// `m1 + C`.
    pub corrected_rate: Option<f64>,
    /// `m1 + C'`.
    pub scenario_rate: Option<f64>,
    /// Blend under the crisis likelihood; absent without `q`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDelta {
    pub id: String,
    pub definition_before: String,
    pub definition_after: String,
    pub points_before: f64,
    pub points_after: f64,
    pub coverage_before: f64,
    pub coverage_after: f64,
    /// Mean change of the rule's log-odds contribution per record.
    pub mean_logodds_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crisis_likelihood: Option<f64>,
    pub variable: String,
    pub cuts: Vec<f64>,
    pub overall: ScenarioRates,
    pub bands: Vec<ScenarioRates>,
    pub rules: Vec<RuleDelta>,
}

#[derive(Clone, Default)]
struct Sums {
    count: usize,
    observed: f64,
    base: f64,
    corrected: f64,
    scenario: f64,
    expected: f64,
}

impl Sums {
    fn add(&mut self, y: f64, p: [f64; 4]) {
        self.count += 1;
        self.observed += y;
        self.base += p[0];
        self.corrected += p[1];
        self.scenario += p[2];
        self.expected += p[3];
    }

    fn rates(&self, band: String, with_q: bool) -> ScenarioRates {
        let mean = |s: f64| (self.count > 0).then(|| s / self.count as f64);
        ScenarioRates {
            band,
            count: self.count,
            observed_rate: mean(self.observed),
            base_rate: mean(self.base),
            corrected_rate: mean(self.corrected),
            scenario_rate: mean(self.scenario),
            expected_rate: if with_q { mean(self.expected) } else { None },
        }
    }
}

/// Rescores `data` with `M1`, `M1 + C` and `M1 + C'` and aggregates mean
/// probabilities per band of `variable` and overall.
pub fn scenario_report(
    pipeline: &CorrectionPipeline,
    spec: &ScenarioSpec,
    data: &RawDataset,
    variable: &str,
    cuts: &[f64],
) -> Result<ScenarioReport> {
    validate_cuts(cuts)?;
    let base_model = pipeline.correction();
    let scenario_model = apply_overrides(base_model, spec)?;
    let values = numeric_column(data, variable)?;
    let m1 = pipeline.score_m1(data)?;
    let binary = transform(pipeline.discretizer(), data)?;
    let a = base_model.scale_a();
    let q = spec.crisis_likelihood;
    let n_rules = base_model.rules().len();

    let mut bands = vec![Sums::default(); cuts.len() + 2];
    let mut overall = Sums::default();
    let mut hits_before = vec![0usize; n_rules];
    let mut hits_after = vec![0usize; n_rules];
    let mut contribution_delta = vec![0.0; n_rules];
    let points_before = base_model.points();
    let points_after = scenario_model.points();
    for (i, record) in binary.records().enumerate() {
        let before = base_model.triggered(record)?;
        let after = scenario_model.triggered(record)?;
        let mut c_before = 0.0;
        let mut c_after = 0.0;
        for j in 0..n_rules {
            let pb = if before[j] { points_before[j] } else { 0.0 };
            let pa = if after[j] { points_after[j] } else { 0.0 };
            c_before += pb;
            c_after += pa;
            hits_before[j] += before[j] as usize;
            hits_after[j] += after[j] as usize;
            contribution_delta[j] += -(pa - pb) / a;
        }
        let p_base = sigmoid(m1[i]);
        let p_corrected = sigmoid(m1[i] - c_before / a);
        let p_scenario = sigmoid(m1[i] - c_after / a);
        let p_expected = q.map_or(0.0, |q| q * p_scenario + (1.0 - q) * p_base);
        let probs = [p_base, p_corrected, p_scenario, p_expected];
        let y = data.target()[i];
        let b = match values[i] {
            Some(v) if !v.is_nan() => cuts.partition_point(|&c| c <= v),
            _ => cuts.len() + 1,
        };
        bands[b].add(y, probs);
        overall.add(y, probs);
    }

    let n = data.len().max(1) as f64;
    let rules = base_model
        .rules()
        .iter()
        .zip(scenario_model.rules())
        .enumerate()
        .map(|(j, (rb, ra))| RuleDelta {
            id: rb.id.clone(),
            definition_before: rb.label.clone(),
            definition_after: ra.label.clone(),
            points_before: points_before[j],
            points_after: points_after[j],
            coverage_before: hits_before[j] as f64 / n,
            coverage_after: hits_after[j] as f64 / n,
            mean_logodds_delta: contribution_delta[j] / n,
        })
        .collect();
    let labels = band_labels(variable, cuts);
    Ok(ScenarioReport {
        name: spec.name.clone(),
        crisis_likelihood: q,
        variable: variable.into(),
        cuts: cuts.to_vec(),
        overall: overall.rates("overall".into(), q.is_some()),
        bands: bands
            .iter()
            .zip(labels)
            .map(|(s, label)| s.rates(label, q.is_some()))
            .collect(),
        rules,
    })
}

impl ScenarioReport {
    /// Band rows followed by the overall row.
    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "band",
            "count",
            "observed_rate",
            "base_rate",
            "corrected_rate",
            "scenario_rate",
            "expected_rate",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in self.bands.iter().chain(std::iter::once(&self.overall)) {
            w.write_record([
                r.band.clone(),
                r.count.to_string(),
                opt(r.observed_rate),
                opt(r.base_rate),
                opt(r.corrected_rate),
                opt(r.scenario_rate),
                opt(r.expected_rate),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
