//! The reference 16-rule correction layer for the 2006 → 2010 mortgage
//! drift, with the binning it is expressed in, and a demo pipeline around it.
//!
//! The demo's base models are intercept-only classifiers at the reference
//! overall default rates (2.88% and 0.58%); they stand in for the gradient
//! boosted models the layer was fitted against, which are not distributed.

use crate::correction::{BaseScorer, CorrectionPipeline};
use crate::data::synthetic::{AREA1, ID_COLUMN, TARGET};
use crate::data::{DiscretizationSpec, GroupSpec, VariableBinning};
use crate::model::{Literal, Mode, Rule, RuleModel};

pub const REGIME1_RATE: f64 = 0.0288;
pub const REGIME2_RATE: f64 = 0.0058;

/// Rule id, feature and points of the reference layer; the intercept last.
pub const TABLE1: [(&str, &str, f64); 16] = [
    ("R-01", "cscore<706", -1.98),
    ("R-02", "orig_rate>=6", -0.97),
    ("R-03", "num_bo<2", -0.11),
    ("R-04", "loan_term>=360", 0.47),
    ("R-05", "purpose in [U,P]", 0.7),
    ("R-06", "orig_rate in [5.25,6)", -2.92),
    ("R-07", "prop_type=SF", -1.05),
    ("R-08", "purpose=C", -0.18),
    ("R-09", "insurance_pct>=9", 1.50),
    ("R-10", "comb_ltv>=80", -0.91),
    ("R-11", "state=area1", 0.26),
    ("R-12", "occupancy_type=P", -0.4),
    ("R-13", "dti>=43", -0.87),
    ("R-14", "comb_ltv<55", 0.33),
    ("R-15", "ltv in [78,80)", -0.76),
    ("R-16", "-", 1.71),
];

fn numeric(name: &str, cuts: &[f64]) -> VariableBinning {
    VariableBinning::Numeric {
        name: name.into(),
        cuts: cuts.to_vec(),
    }
}

fn categorical(name: &str, groups: Vec<GroupSpec>) -> VariableBinning {
    VariableBinning::Categorical {
        name: name.into(),
        groups,
    }
}

/// Binning that yields every feature the reference rules mention.
pub fn table1_discretizer() -> DiscretizationSpec {
    let mut spec = DiscretizationSpec::new(
        TARGET,
        vec![
            numeric("cscore", &[706.0]),
            numeric("orig_rate", &[5.25, 6.0]),
            numeric("num_bo", &[2.0]),
            numeric("loan_term", &[360.0]),
            categorical(
                "purpose",
                vec![GroupSpec::of(&["U", "P"]), GroupSpec::of(&["C"]), GroupSpec::of(&["R"])],
            ),
            categorical(
                "prop_type",
                ["SF", "PU", "CO", "MH", "CP"].iter().map(|c| GroupSpec::of(&[c])).collect(),
            ),
            numeric("insurance_pct", &[9.0]),
            numeric("comb_ltv", &[55.0, 80.0]),
            categorical("state", vec![GroupSpec::named("area1", &AREA1)]),
            categorical(
                "occupancy_type",
                ["P", "S", "I"].iter().map(|c| GroupSpec::of(&[c])).collect(),
            ),
            numeric("dti", &[43.0]),
            numeric("ltv", &[78.0, 80.0]),
        ],
    )
    .expect("static binning is valid");
    spec.id_column = Some(ID_COLUMN.into());
    spec
}

/// The reference correction layer as a regressor with `a = 1`.
pub fn table1_model() -> RuleModel {
    let spec = table1_discretizer();
    let names = spec.feature_names();
    let rules = TABLE1
        .iter()
        .map(|&(id, feature, points)| {
            let premise = if feature == "-" {
                Vec::new()
            } else {
                let index = names
                    .iter()
                    .position(|n| n == feature)
                    .expect("every reference feature is binned");
                vec![Literal::positive(index)]
            };
            Rule::from_points(id, feature, premise, points, 1.0).expect("reference points are finite")
        })
        .collect();
    RuleModel::new(rules, 1.0, Mode::Regressor, names).expect("static model is valid")
}

fn constant_scorer(rate: f64) -> BaseScorer {
    let spec = table1_discretizer();
    let model = RuleModel::new(
        vec![Rule::intercept("R-01", rate).expect("rate is a probability")],
        1.0,
        Mode::Classifier,
        spec.feature_names(),
    )
    .expect("static model is valid");
    BaseScorer::internal(model, spec).expect("same feature space")
}

/// Demo pipeline: constant base models at the reference overall rates
/// around the reference correction layer.
pub fn demo_pipeline() -> CorrectionPipeline {
    CorrectionPipeline::new(
        constant_scorer(REGIME1_RATE),
        constant_scorer(REGIME2_RATE),
        table1_model(),
        table1_discretizer(),
        None,
    )
    .expect("static pipeline is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::to_json_pretty;

    #[test]
    fn reference_points_survive_the_weight_roundtrip() {
        let m = table1_model();
        for (rule, &(id, _, points)) in m.rules().iter().zip(&TABLE1) {
            assert_eq!(rule.id, id);
            assert!((rule.points(1.0) - points).abs() < 1e-12, "{id}");
        }
        assert!(m.rules().last().unwrap().is_intercept());
    }

    #[test]
    fn checked_in_asset_matches() {
        let asset = include_str!("../assets/table1_pipeline.json");
        assert_eq!(to_json_pretty(&demo_pipeline()).unwrap(), asset);
    }
}
