//! Two-regime synthetic mortgage data with known ground truth.
//!
//! Applicants carry the twelve acquisition variables of a Fannie Mae style
//! extract. Defaults are drawn from a logistic truth model written in points
//! (positive points = safer, default log-odds = -points). The second regime
//! can use different truth terms (concept drift) and only admit applicants
//! whose regime-1 truth points clear an acceptance threshold (population
//! drift).

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::discretize::{DataConfig, GroupSpec, VariableConfig};
use super::predicate::{Predicate, RowView};
use super::raw::{Column, ColumnData, RawDataset};
use crate::error::{Error, Result};
use crate::model::sigmoid;

pub const TARGET: &str = "default";
pub const ID_COLUMN: &str = "loan_id";
pub const AREA1: [&str; 5] = ["NV", "AZ", "CA", "FL", "MI"];

const NUMERIC: [&str; 8] = [
    "cscore",
    "orig_rate",
    "num_bo",
    "dti",
    "ltv",
    "comb_ltv",
    "loan_term",
    "insurance_pct",
];
const CATEGORICAL: [&str; 4] = ["purpose", "occupancy_type", "prop_type", "state"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTerm {
    pub condition: Predicate,
    pub points: f64,
}

/// Additive points model over raw-variable conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub intercept_points: f64,
    pub terms: Vec<TruthTerm>,
}

impl TruthModel {
    pub fn points(&self, row: &impl RowView) -> f64 {
        self.intercept_points
            + self
                .terms
                .iter()
                .filter(|t| t.condition.eval(row))
                .map(|t| t.points)
                .sum::<f64>()
    }

    pub fn default_probability(&self, row: &impl RowView) -> f64 {
        sigmoid(-self.points(row))
    }

    fn term(condition: &str, points: f64) -> TruthTerm {
        TruthTerm {
            condition: condition.parse().expect("built-in condition parses"),
            points,
        }
    }

    /// Pre-crisis truth.
    pub fn regime1() -> Self {
        let t = Self::term;
        Self {
            intercept_points: 2.9,
            terms: vec![
                t("cscore<660", -1.3),
                t("cscore in [660,706)", -0.6),
                t("cscore>=760", 0.6),
                t("orig_rate>=6", -0.4),
                t("num_bo<2", -0.35),
                t("purpose=C", -0.25),
                t("occupancy_type=I", -0.3),
                t("prop_type=MH", -0.5),
                t("state in [NV,AZ,CA,FL,MI]", -0.7),
                t("dti>=43", -0.25),
                t("comb_ltv>=80", -0.6),
                t("ltv>=90", -0.4),
                t("loan_term>=360", -0.3),
            ],
        }
    }

    /// Post-crisis truth: credit score, rate and debt burden matter more,
    /// the regional effect is gone and leverage matters less.
    pub fn regime2() -> Self {
        let t = Self::term;
        Self {
            intercept_points: 3.3,
            terms: vec![
                t("cscore<660", -2.3),
                t("cscore in [660,706)", -1.6),
                t("cscore>=760", 0.6),
                t("orig_rate>=6", -0.9),
                t("num_bo<2", -0.45),
                t("purpose=C", -0.25),
                t("occupancy_type=I", -0.3),
                t("prop_type=MH", -0.5),
                t("dti>=43", -1.0),
                t("comb_ltv>=80", -0.1),
                t("comb_ltv<55", 0.4),
                t("ltv>=90", -0.4),
                t("loan_term>=360", -0.3),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub regime1_count: usize,
    pub regime2_count: usize,
    pub regime1: TruthModel,
    pub regime2: TruthModel,
    /// Regime-2 applicants are kept only if their regime-1 truth points reach this value.
    #[serde(default)]
    pub acceptance_threshold: Option<f64>,
    pub seed: u64,
    /// Rejection sampling gives up after `max_attempts_factor * regime2_count` draws.
    #[serde(default = "default_attempts")]
    pub max_attempts_factor: usize,
}

fn default_attempts() -> usize {
    50
}

impl SyntheticConfig {
    /// Concept and population drift between the two regimes.
    pub fn two_regime(regime1_count: usize, regime2_count: usize, seed: u64) -> Self {
        Self {
            regime1_count,
            regime2_count,
            regime1: TruthModel::regime1(),
            regime2: TruthModel::regime2(),
            acceptance_threshold: Some(0.9),
            seed,
            max_attempts_factor: default_attempts(),
        }
    }

    /// Same truth in both regimes and no acceptance filter.
    pub fn null_drift(regime1_count: usize, regime2_count: usize, seed: u64) -> Self {
        Self {
            regime2: TruthModel::regime1(),
            acceptance_threshold: None,
            ..Self::two_regime(regime1_count, regime2_count, seed)
        }
    }
}

/// The generator's ground truth, returned alongside the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub regime1: TruthModel,
    pub regime2: TruthModel,
    pub acceptance_threshold: Option<f64>,
}

#[derive(Debug, Clone)]
struct Applicant {
    numeric: [Option<f64>; NUMERIC.len()],
    categorical: [&'static str; CATEGORICAL.len()],
}

impl RowView for Applicant {
    fn numeric(&self, variable: &str) -> Option<f64> {
        NUMERIC
            .iter()
            .position(|v| *v == variable)
            .and_then(|i| self.numeric[i])
    }

    fn categorical(&self, variable: &str) -> Option<String> {
        CATEGORICAL
            .iter()
            .position(|v| *v == variable)
            .map(|i| self.categorical[i].to_string())
    }
}

struct Categorical {
    values: &'static [&'static str],
    dist: WeightedIndex<f64>,
}

impl Categorical {
    fn new(values: &'static [&'static str], weights: &[f64]) -> Self {
        Self {
            values,
            dist: WeightedIndex::new(weights).expect("positive weights"),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> &'static str {
        self.values[self.dist.sample(rng)]
    }
}

struct ApplicantSampler {
    purpose: Categorical,
    occupancy: Categorical,
    prop_type: Categorical,
    state: Categorical,
}

const STATES: [&str; 15] = [
    "NV", "AZ", "CA", "FL", "MI", "TX", "NY", "IL", "PA", "OH", "GA", "NC", "WA", "CO", "MA",
];

impl ApplicantSampler {
    fn new() -> Self {
        Self {
            purpose: Categorical::new(&["P", "C", "R", "U"], &[0.5, 0.3, 0.15, 0.05]),
            occupancy: Categorical::new(&["P", "S", "I"], &[0.85, 0.05, 0.10]),
            prop_type: Categorical::new(&["SF", "PU", "CO", "MH", "CP"], &[0.7, 0.15, 0.1, 0.03, 0.02]),
            state: Categorical::new(
                &STATES,
                &[2.0, 3.0, 14.0, 8.0, 3.0, 9.0, 7.0, 5.0, 5.0, 5.0, 4.0, 4.0, 3.0, 3.0, 3.0],
            ),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Applicant {
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        // latent credit quality drives several correlated attributes
        let u = normal();
        let cscore = (725.0 + 45.0 * u + 20.0 * normal()).clamp(300.0, 850.0).round();
        let orig_rate = ((5.9 - 0.3 * u + 0.5 * normal()) * 8.0).round() / 8.0;
        let dti = (34.0 - 3.0 * u + 9.0 * normal()).clamp(1.0, 64.0).round();
        let ltv = (74.0 - 4.0 * u + 15.0 * normal()).clamp(5.0, 97.0).round();
        let second_lien = rng.random_bool(0.2);
        let comb_ltv = if second_lien {
            (ltv + rng.random_range(1.0..15.0_f64)).min(105.0).round()
        } else {
            ltv
        };
        let num_bo = if rng.random_bool(0.45) {
            1.0
        } else if rng.random_bool(0.92) {
            2.0
        } else {
            3.0
        };
        let loan_term = *[360.0, 180.0, 240.0]
            .choose_weighted(rng, |t| match *t as i32 {
                360 => 0.75,
                180 => 0.2,
                _ => 0.05,
            })
            .expect("weights");
        let insurance_pct = if ltv > 80.0 {
            *[12.0, 25.0, 30.0].choose(rng).expect("non-empty")
        } else {
            0.0
        };
        let mut numeric = [
            Some(cscore),
            Some(orig_rate),
            Some(num_bo),
            Some(dti),
            Some(ltv),
            Some(comb_ltv),
            Some(loan_term),
            Some(insurance_pct),
        ];
        // a sprinkle of missing values in the usual suspects
        if rng.random_bool(0.005) {
            numeric[0] = None;
        }
        if rng.random_bool(0.01) {
            numeric[3] = None;
        }
        Applicant {
            numeric,
            categorical: [
                self.purpose.sample(rng),
                self.occupancy.sample(rng),
                self.prop_type.sample(rng),
                self.state.sample(rng),
            ],
        }
    }
}

fn assemble(applicants: Vec<Applicant>, defaults: Vec<f64>, prefix: &str) -> Result<RawDataset> {
    let mut columns = Vec::with_capacity(NUMERIC.len() + CATEGORICAL.len());
    for (j, name) in NUMERIC.iter().enumerate() {
        columns.push(Column {
            name: name.to_string(),
            data: ColumnData::Numeric(applicants.iter().map(|a| a.numeric[j]).collect()),
        });
    }
    for (j, name) in CATEGORICAL.iter().enumerate() {
        columns.push(Column {
            name: name.to_string(),
            data: ColumnData::Categorical(
                applicants
                    .iter()
                    .map(|a| Some(a.categorical[j].to_string()))
                    .collect(),
            ),
        });
    }
    let ids = (1..=applicants.len()).map(|i| format!("{prefix}-{i:06}")).collect();
    Ok(RawDataset::new(columns, TARGET, defaults, ids)?.with_id_column(ID_COLUMN))
}

/// Samples both regimes. Identical configs give identical datasets.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(RawDataset, RawDataset, SyntheticTruth)> {
    if config.regime1_count == 0 || config.regime2_count == 0 {
        return Err(Error::Size("both regimes need at least one record".into()));
    }
    let sampler = ApplicantSampler::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let draw = |rng: &mut ChaCha8Rng, truth: &TruthModel, a: &Applicant| -> f64 {
        let p = truth.default_probability(a);
        f64::from(u8::from(rng.random_bool(p)))
    };

    let mut apps1 = Vec::with_capacity(config.regime1_count);
    let mut y1 = Vec::with_capacity(config.regime1_count);
    for _ in 0..config.regime1_count {
        let a = sampler.sample(&mut rng);
        y1.push(draw(&mut rng, &config.regime1, &a));
        apps1.push(a);
    }

    let max_attempts = config.max_attempts_factor.max(1) * config.regime2_count;
    let mut apps2 = Vec::with_capacity(config.regime2_count);
    let mut y2 = Vec::with_capacity(config.regime2_count);
    let mut attempts = 0;
    while apps2.len() < config.regime2_count {
        if attempts == max_attempts {
            return Err(Error::Size(format!(
                "acceptance threshold admitted {} of {attempts} applicants; {} needed",
                apps2.len(),
                config.regime2_count
            )));
        }
        attempts += 1;
        let a = sampler.sample(&mut rng);
        let accepted = config
            .acceptance_threshold
            .is_none_or(|t| config.regime1.points(&a) >= t);
        if accepted {
            y2.push(draw(&mut rng, &config.regime2, &a));
            apps2.push(a);
        }
    }
    log::debug!(
        "regime 2 accepted {} of {attempts} applicants",
        config.regime2_count
    );

    let truth = SyntheticTruth {
        regime1: config.regime1.clone(),
        regime2: config.regime2.clone(),
        acceptance_threshold: config.acceptance_threshold,
    };
    Ok((assemble(apps1, y1, "r1")?, assemble(apps2, y2, "r2")?, truth))
}

/// Binning for the synthetic columns, with cuts at the truth model's edges.
pub fn synthetic_data_config() -> DataConfig {
    let mut cfg = DataConfig::new(
        TARGET,
        vec![
            VariableConfig::numeric("cscore").with_cuts(&[660.0, 706.0, 760.0]),
            VariableConfig::numeric("orig_rate").with_cuts(&[5.25, 6.0]),
            VariableConfig::categorical("purpose")
                .with_groups(vec![GroupSpec::of(&["U", "P"]), GroupSpec::of(&["C"]), GroupSpec::of(&["R"])]),
            VariableConfig::categorical("occupancy_type").with_groups(vec![
                GroupSpec::of(&["P"]),
                GroupSpec::of(&["S"]),
                GroupSpec::of(&["I"]),
            ]),
            VariableConfig::categorical("prop_type").with_groups(vec![
                GroupSpec::of(&["SF"]),
                GroupSpec::of(&["PU"]),
                GroupSpec::of(&["CO"]),
                GroupSpec::of(&["MH"]),
            ]),
            VariableConfig::numeric("num_bo").with_cuts(&[2.0]),
            VariableConfig::categorical("state").with_groups(vec![GroupSpec::named("area1", &AREA1)]),
            VariableConfig::numeric("dti").with_cuts(&[36.0, 43.0]),
            VariableConfig::numeric("ltv").with_cuts(&[78.0, 80.0, 90.0]),
            VariableConfig::numeric("comb_ltv").with_cuts(&[55.0, 80.0]),
            VariableConfig::numeric("loan_term").with_cuts(&[360.0]),
            VariableConfig::numeric("insurance_pct").with_cuts(&[9.0]),
        ],
    );
    cfg.id_column = Some(ID_COLUMN.into());
    cfg.strategy = super::discretize::Strategy::Explicit;
    cfg
}
