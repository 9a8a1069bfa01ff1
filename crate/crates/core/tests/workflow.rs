use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use prm_drift::analysis::{auc, cluster_quality, learning_curve};
use prm_drift::bundled::{demo_pipeline, table1_model};
use prm_drift::calibrate::{calibrate, CalibrationConfig};
use prm_drift::correction::{
    build_correction, split_raw, train_base_model, write_scores, BaseScorer, CorrectionContext,
    CorrectionPipeline, ScoreSpace, SplitConfig,
};
use prm_drift::data::synthetic::{generate_synthetic, synthetic_data_config, SyntheticConfig, TruthModel};
use prm_drift::data::{fit_discretizer, transform, BinaryDataset, RawDataset};
use prm_drift::mining::MiningConfig;
use prm_drift::scenario::{apply_overrides, scenario_report, Action, ScenarioSpec};
use prm_drift::session::Session;
use prm_drift::{logit, sigmoid, Error, Literal, Mode, Rule, RuleModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rule_model(k: usize, mode: Mode) -> RuleModel {
    let names: Vec<String> = (0..k).map(|j| format!("f{j}")).collect();
    let mut rules: Vec<Rule> = (0..k)
        .map(|j| Rule::new(format!("R-{:02}", j + 1), names[j].clone(), vec![Literal::positive(j)], 0.5).unwrap())
        .collect();
    rules.push(Rule::intercept(format!("R-{:02}", k + 1), 0.5).unwrap());
    RuleModel::new(rules, 1.0, mode, names).unwrap()
}

fn design(data: &BinaryDataset) -> DMatrix<f64> {
    let k = data.feature_count();
    DMatrix::from_fn(data.len(), k + 1, |i, j| {
        if j == k || data.record(i)[j] {
            1.0
        } else {
            0.0
        }
    })
}

/// Newton-Raphson for unpenalized logistic regression.
fn irls(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..50 {
        let p = (x * &beta).map(sigmoid);
        let w = p.map(|v| v * (1.0 - v));
        let xtwx = x.transpose() * DMatrix::from_diagonal(&w) * x;
        let step = xtwx.lu().solve(&(x.transpose() * (y - &p))).unwrap();
        beta += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    beta
}

#[test]
fn unpenalized_classifier_is_logistic_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = [0.8, -1.2, 0.4, 0.0, -1.5];
    let n = 6000;
    let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..4).map(|_| rng.random_bool(0.35)).collect()).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let z = truth[4] + (0..4).filter(|&j| r[j]).map(|j| truth[j]).sum::<f64>();
            f64::from(u8::from(rng.random_bool(sigmoid(z))))
        })
        .collect();
    let data = BinaryDataset::from_rows(&rows, (0..4).map(|j| format!("f{j}")).collect(), y.clone()).unwrap();
    let beta = irls(&design(&data), &DVector::from_vec(y));
    let cfg = CalibrationConfig::new(Mode::Classifier).with_lambda(0.0);
    let (fitted, report) = calibrate(&rule_model(4, Mode::Classifier), &data, &cfg).unwrap();
    assert!(report.converged);
    for (j, rule) in fitted.rules().iter().enumerate() {
        assert!((logit(rule.weight()) - beta[j]).abs() < 1e-6, "{} {} {}", rule.id, logit(rule.weight()), beta[j]);
    }
}

#[test]
fn unpenalized_regressor_is_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 3000;
    let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..3).map(|_| rng.random_bool(0.5)).collect()).collect();
    let z: Vec<f64> = rows
        .iter()
        .map(|r| 0.3 + if r[0] { -1.0 } else { 0.0 } + if r[2] { 0.7 } else { 0.0 } + rng.random_range(-0.5..0.5))
        .collect();
    let data = BinaryDataset::from_rows(&rows, (0..3).map(|j| format!("f{j}")).collect(), z.clone()).unwrap();
    let x = design(&data);
    let ols = (x.transpose() * &x).lu().solve(&(x.transpose() * DVector::from_vec(z))).unwrap();
    let cfg = CalibrationConfig::new(Mode::Regressor).with_lambda(0.0);
    let (fitted, report) = calibrate(&rule_model(3, Mode::Regressor), &data, &cfg).unwrap();
    assert!(report.converged);
    for (j, p) in fitted.points().iter().enumerate() {
        assert!((p - ols[j]).abs() < 1e-6, "{j}: {p} vs {}", ols[j]);
    }
}

fn fixture(n: usize, seed: u64) -> (RawDataset, RawDataset, BaseScorer, BaseScorer) {
    let (d1, d2, _) = generate_synthetic(&SyntheticConfig::two_regime(n, n, seed)).unwrap();
    let cfg = synthetic_data_config();
    let split = SplitConfig {
        test_fraction: cfg.test_fraction,
        seed: cfg.seed,
    };
    let m1 = train_base_model(&split_raw(&d1, &split).unwrap().0, &cfg, 0.01).unwrap();
    let m2 = train_base_model(&split_raw(&d2, &split).unwrap().0, &cfg, 0.01).unwrap();
    (d1, d2, m1, m2)
}

#[test]
fn row_order_does_not_change_the_correction() {
    let (d1, d2, m1, m2) = fixture(3000, 5);
    let mut rev: Vec<usize> = (0..d2.len()).collect();
    rev.reverse();
    let d2_rev = d2.subset(&rev);
    let mining = MiningConfig::new(8).unwrap();
    let calib = CalibrationConfig::new(Mode::Regressor);
    let cfg = synthetic_data_config();
    let a = build_correction(&d1, &d2, &m1, &m2, &mining, &calib, &cfg).unwrap();
    let b = build_correction(&d1, &d2_rev, &m1, &m2, &mining, &calib, &cfg).unwrap();
    assert_eq!(a.pipeline, b.pipeline);
}

#[test]
fn learning_curve_starts_at_m1_and_is_flat_without_drift() {
    let (d1, d2, m1, m2) = fixture(4000, 6);
    let calib = CalibrationConfig::new(Mode::Regressor);
    let mining = MiningConfig::new(6).unwrap();
    let cfg = synthetic_data_config();
    let ctx = CorrectionContext::prepare(&d1, &d2, &m1, &m2, &mining, &calib, &cfg).unwrap();
    let curve = learning_curve(&ctx, &calib, &[0, 3, 6]).unwrap();
    assert!((curve[0].auc_combined - curve[0].auc_m1).abs() < 1e-12);
    assert!(curve.iter().all(|p| p.auc_m1 == curve[0].auc_m1 && p.auc_m2 == curve[0].auc_m2));
    assert!(learning_curve(&ctx, &calib, &[3, 1]).is_err());
    assert!(learning_curve(&ctx, &calib, &[99]).is_err());

    let same = CorrectionContext::prepare(&d1, &d2, &m1, &m1, &mining, &calib, &cfg).unwrap();
    for p in learning_curve(&same, &calib, &[0, 2, 4, 6]).unwrap() {
        assert!((p.auc_combined - p.auc_m1).abs() < 1e-9);
    }
}

#[test]
fn external_scores_roundtrip_and_tamper_check() {
    let (d1, d2, m1, m2) = fixture(2000, 7);
    let dir = tempfile::tempdir().unwrap();
    let both = d1.concat(&d2).unwrap();
    for (name, scorer, space) in [("m1.csv", &m1, ScoreSpace::Logodds), ("m2.csv", &m2, ScoreSpace::Probability)] {
        let s = scorer.score(&both).unwrap();
        let s = match space {
            ScoreSpace::Logodds => s,
            ScoreSpace::Probability => s.into_iter().map(sigmoid).collect(),
        };
        let f = std::fs::File::create(dir.path().join(name)).unwrap();
        write_scores(f, both.record_ids(), &s, space).unwrap();
    }
    let e1 = BaseScorer::load_external(dir.path().join("m1.csv")).unwrap();
    let e2 = BaseScorer::load_external(dir.path().join("m2.csv")).unwrap();
    let s_int = m2.score(&d2).unwrap();
    let s_ext = e2.score(&d2).unwrap();
    for (a, b) in s_int.iter().zip(&s_ext) {
        assert!((a - b).abs() < 1e-9);
    }

    let cfg = synthetic_data_config();
    let build = build_correction(
        &d1,
        &d2,
        &e1,
        &e2,
        &MiningConfig::new(5).unwrap(),
        &CalibrationConfig::new(Mode::Regressor),
        &cfg,
    )
    .unwrap();
    // store with paths relative to the document
    let mut doc: serde_json::Value = serde_json::to_value(&build.pipeline).unwrap();
    doc["m1"]["path"] = "m1.csv".into();
    doc["m2"]["path"] = "m2.csv".into();
    let path = dir.path().join("pipeline.json");
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let loaded = CorrectionPipeline::load(&path).unwrap();
    assert_eq!(
        loaded.apply_corrected(&d2).unwrap(),
        build.pipeline.apply_corrected(&d2).unwrap()
    );

    std::fs::write(dir.path().join("m1.csv"), "record_id,score,space\n").unwrap();
    assert!(matches!(CorrectionPipeline::load(&path), Err(Error::Config(_))));
}

#[test]
fn missing_external_ids_are_listed() {
    let (_, d2, _, _) = fixture(200, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let ids = &d2.record_ids()[..150];
    write_scores(std::fs::File::create(&path).unwrap(), ids, &vec![0.0; 150], ScoreSpace::Logodds).unwrap();
    match BaseScorer::load_external(&path).unwrap().score(&d2) {
        Err(Error::MissingRecords { ids }) => assert_eq!(ids, d2.record_ids()[150..]),
        other => panic!("{other:?}"),
    }
}

/// A scenario whose overrides encode exactly the generator's concept shift
/// turns the regime-1 truth into the regime-2 truth.
#[test]
fn scenario_matching_the_injected_shift_recovers_regime2_rates() {
    let (_, d2, truth) = generate_synthetic(&SyntheticConfig::two_regime(10, 50_000, 9)).unwrap();
    let cfg = synthetic_data_config();
    let spec = fit_discretizer(&d2, &cfg).unwrap();
    let binary = transform(&spec, &d2).unwrap();

    // net points shift per condition
    let mut shift: Vec<(String, f64)> = Vec::new();
    for (model, sign) in [(&truth.regime2, 1.0), (&truth.regime1, -1.0)] {
        for t in &model.terms {
            let key = t.condition.to_string();
            match shift.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => *v += sign * t.points,
                None => shift.push((key, sign * t.points)),
            }
        }
    }
    let feature_of = |condition: &str| {
        let pred: prm_drift::data::Predicate = condition.parse().unwrap();
        (0..binary.feature_count())
            .find(|&j| (0..d2.len()).all(|i| pred.eval(&d2.row(i)) == binary.record(i)[j]))
            .unwrap_or_else(|| panic!("no feature matches {condition}"))
    };
    let names = spec.feature_names();
    let mut rules = Vec::new();
    let mut scenario = ScenarioSpec::new("injected");
    for (k, (cond, delta)) in shift.iter().filter(|(_, d)| d.abs() > 1e-12).enumerate() {
        let id = format!("R-{:02}", k + 1);
        let j = feature_of(cond);
        rules.push(Rule::new(id.clone(), names[j].clone(), vec![Literal::positive(j)], 0.5).unwrap());
        scenario = scenario.with(&id, Action::SetPoints { points: *delta });
    }
    let intercept_id = format!("R-{:02}", rules.len() + 1);
    rules.push(Rule::intercept(intercept_id.clone(), 0.5).unwrap());
    scenario = scenario.with(
        &intercept_id,
        Action::SetPoints {
            points: truth.regime2.intercept_points - truth.regime1.intercept_points,
        },
    );
    let correction = RuleModel::new(rules, 1.0, Mode::Regressor, names).unwrap();

    let m1_scores: HashMap<String, f64> = (0..d2.len())
        .map(|i| (d2.record_ids()[i].clone(), -TruthModel::points(&truth.regime1, &d2.row(i))))
        .collect();
    let m1 = BaseScorer::External {
        path: "truth.csv".into(),
        sha256: String::new(),
        scores: m1_scores,
    };
    let pipeline = CorrectionPipeline::new(m1.clone(), m1, correction, spec, None).unwrap();
    let report = scenario_report(&pipeline, &scenario, &d2, "cscore", &[660.0, 706.0, 760.0]).unwrap();
    let observed = report.overall.observed_rate.unwrap();
    let scen = report.overall.scenario_rate.unwrap();
    let truth_rate = (0..d2.len())
        .map(|i| truth.regime2.default_probability(&d2.row(i)))
        .sum::<f64>()
        / d2.len() as f64;
    assert!((scen - truth_rate).abs() < 1e-9, "{scen} vs {truth_rate}");
    assert!((scen - observed).abs() < 0.003, "{scen} vs {observed}");
    // the disabled layer reproduces M1
    assert_eq!(report.overall.corrected_rate, report.overall.base_rate);
}

#[test]
fn reference_layer_examples() {
    let m = table1_model();
    let idx = |name: &str| m.feature_index(name).unwrap();
    let mut only_r01 = vec![false; m.feature_names().len()];
    only_r01[idx("cscore<706")] = true;
    let disabled = apply_overrides(&m, &ScenarioSpec::new("d").with("R-01", Action::Disable)).unwrap();
    assert!((m.score_points(&only_r01).unwrap() - (1.71 - 1.98)).abs() < 1e-9);
    assert!((disabled.score_points(&only_r01).unwrap() - 1.71).abs() < 1e-9);

    let mut high_dti = vec![false; m.feature_names().len()];
    high_dti[idx("dti>=43")] = true;
    let scaled = apply_overrides(
        &m,
        &ScenarioSpec::new("s").with("R-13", Action::ScalePoints { factor: 2.0 }),
    )
    .unwrap();
    assert!((scaled.rule("R-13").unwrap().points(1.0) + 1.74).abs() < 1e-9);
    let shift = scaled.log_odds(&high_dti).unwrap() - m.log_odds(&high_dti).unwrap();
    assert!((shift - 0.87).abs() < 1e-9);
}

#[test]
fn demo_session_answers() {
    let (_, d2, _) = generate_synthetic(&SyntheticConfig::two_regime(10, 3000, 10)).unwrap();
    let session = Session::new(demo_pipeline(), d2).unwrap();
    let view = session.model_view().unwrap();
    assert_eq!(view.rules.len(), 16);
    assert_eq!(view.rules.last().unwrap().id, "R-16");
    assert!(view.rules.windows(2).take(14).all(|w| w[0].impact >= w[1].impact));

    let id = session.data().record_ids()[0].clone();
    let e = session.explain(&id).unwrap().unwrap();
    assert!((e.m1_logodds - logit(0.0288)).abs() < 1e-12);
    assert!((e.combined_logodds - e.m1_logodds - e.correction_logodds).abs() < 1e-12);
    assert!((e.correction_logodds + e.correction.total_points).abs() < 1e-12);
    assert!(session.explain("nope").unwrap().is_none());

    let same = session.scenario(&ScenarioSpec::new("noop").with_likelihood(1.0), None, None).unwrap();
    for r in same.bands.iter().chain([&same.overall]) {
        assert_eq!(r.scenario_rate, r.corrected_rate);
        assert_eq!(r.expected_rate, r.scenario_rate);
    }
    let zero = session
        .scenario(&ScenarioSpec::new("z").with("R-01", Action::Disable).with_likelihood(0.0), None, None)
        .unwrap();
    for r in zero.bands.iter().chain([&zero.overall]) {
        assert_eq!(r.expected_rate, r.base_rate);
    }
    let bands = session.bands(None, None).unwrap();
    assert_eq!(bands.variable, "cscore");
    assert_eq!(bands.bands.iter().map(|b| b.count).sum::<usize>(), 3000);
}

/// Within the cluster {A, B} the model is right on average for records
/// without C and wrong for those with C; C is the refinement.
#[test]
fn refinement_finds_the_hidden_third_rule() {
    let names: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 4000;
    let rows: Vec<Vec<bool>> = (0..n)
        .map(|_| vec![rng.random_bool(0.6), rng.random_bool(0.6), rng.random_bool(0.4), rng.random_bool(0.5)])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let p = if r[0] && r[1] && r[2] { 0.6 } else { 0.1 };
            f64::from(u8::from(rng.random_bool(p)))
        })
        .collect();
    let predicted = vec![0.1; n];
    let data = BinaryDataset::from_rows(&rows, names.clone(), y).unwrap();
    let rules = (0..4)
        .map(|j| Rule::new(format!("R-0{}", j + 1), names[j].clone(), vec![Literal::positive(j)], 0.5).unwrap())
        .chain([Rule::intercept("R-05", 0.5).unwrap()])
        .collect();
    let model = RuleModel::new(rules, 1.0, Mode::Classifier, names).unwrap();
    let q = cluster_quality(&["R-01".into(), "R-02".into()], &model, &data, &predicted, 0.02).unwrap();
    assert!(q.gap.unwrap() > 0.1);
    let r = q.refinement.unwrap();
    assert_eq!(r.rule, "R-03");
    assert!(r.without_rule.gap.unwrap() < 0.03);

    let all = cluster_quality(
        &["R-01".into(), "R-02".into(), "R-03".into(), "R-04".into()],
        &model,
        &data,
        &predicted,
        0.0,
    )
    .unwrap();
    assert!(all.refinement.is_none());
}

#[test]
fn auc_of_base_models_on_held_out_data() {
    let (d1, d2, m1, m2) = fixture(5000, 12);
    let cfg = synthetic_data_config();
    let split = SplitConfig {
        test_fraction: cfg.test_fraction,
        seed: cfg.seed,
    };
    let (_, test) = split_raw(&d2, &split).unwrap();
    let a1 = auc(&m1.score(&test).unwrap(), test.target()).unwrap();
    let a2 = auc(&m2.score(&test).unwrap(), test.target()).unwrap();
    assert!(a2 > a1, "{a2} <= {a1}");
    let _ = d1;
}
