//! Weight calibration by regularized maximum likelihood / least squares.
//!
//! Parameters are the rule log-odds `theta_j = ln(psi_j / (1 - psi_j))`, so
//! any real vector is a valid model. The ridge term stays in weight space,
//! `lambda * sum (psi_j - 0.5)^2`, and reaches the gradient through the chain
//! rule `d psi / d theta = psi (1 - psi)`.
//!
//! Objective and gradient are sums over records evaluated in fixed-size chunks
//! and reduced in chunk order, so results are bit-identical across runs and
//! thread counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::BinaryDataset;
use crate::error::{Error, Result};
use crate::lbfgs::{self, inf_norm, LbfgsOptions, Termination};
use crate::model::{sigmoid, Mode, RuleModel};

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the log-loss.
pub const P_CLAMP: f64 = 1e-12;

const CHUNK: usize = 2048;

fn default_iterations() -> usize {
    500
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_memory() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Ridge strength; `None` means `1e-3 * rules / records`.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub mode: Mode,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default = "default_memory")]
    pub memory: usize,
    /// Kept for configuration symmetry; the optimizer is deterministic.
    #[serde(default)]
    pub seed: u64,
}

impl CalibrationConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            lambda: None,
            mode,
            max_iterations: default_iterations(),
            gradient_tolerance: default_tolerance(),
            memory: default_memory(),
            seed: 0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda must be >= 0, got {l}")));
            }
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("gradient_tolerance must be positive".into()));
        }
        if self.memory == 0 {
            return Err(Error::Config("memory must be at least 1".into()));
        }
        Ok(())
    }

    /// The ridge strength used for a model with `rules` rules on `records` records.
    pub fn effective_lambda(&self, rules: usize, records: usize) -> f64 {
        self.lambda
            .unwrap_or_else(|| 1e-3 * rules as f64 / records.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleWeight {
    pub id: String,
    pub label: String,
    pub weight: f64,
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub lambda: f64,
    /// Objective at the start and after each accepted step.
    pub objective_history: Vec<f64>,
    pub rules: Vec<RuleWeight>,
}

/// Trigger sets in compressed row form plus the target, ready for repeated
/// objective evaluation.
struct Problem<'a> {
    offsets: Vec<usize>,
    triggered: Vec<u32>,
    target: &'a [f64],
    mode: Mode,
    scale_a: f64,
    lambda: f64,
    rules: usize,
}

impl<'a> Problem<'a> {
    fn new(model: &RuleModel, data: &'a BinaryDataset, config: &CalibrationConfig) -> Result<Self> {
        config.validate()?;
        if data.feature_count() != model.feature_names().len() {
            return Err(Error::Structure(format!(
                "dataset has {} features, model expects {}",
                data.feature_count(),
                model.feature_names().len()
            )));
        }
        if config.mode == Mode::Classifier && !data.target_is_binary() {
            return Err(Error::Mode(
                "classifier calibration needs a 0/1 target".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(data.len() + 1);
        let mut triggered = Vec::new();
        offsets.push(0);
        for rec in data.records() {
            for (j, rule) in model.rules().iter().enumerate() {
                if rule.fires(rec) {
                    triggered.push(j as u32);
                }
            }
            offsets.push(triggered.len());
        }
        Ok(Self {
            offsets,
            triggered,
            target: data.target(),
            mode: config.mode,
            scale_a: model.scale_a(),
            lambda: config.effective_lambda(model.rules().len(), data.len()),
            rules: model.rules().len(),
        })
    }

    fn rows(&self, i: usize) -> &[u32] {
        &self.triggered[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Data term over records `range`, accumulating into `grad`.
    fn chunk(&self, theta: &[f64], range: std::ops::Range<usize>, grad: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for i in range {
            let rows = self.rows(i);
            let eta: f64 = rows.iter().map(|&j| theta[j as usize]).sum();
            let y = self.target[i];
            let d = match self.mode {
                Mode::Classifier => {
                    let p = sigmoid(eta).clamp(P_CLAMP, 1.0 - P_CLAMP);
                    let q = sigmoid(-eta).clamp(P_CLAMP, 1.0 - P_CLAMP);
                    loss -= y * p.ln() + (1.0 - y) * q.ln();
                    p - y
                }
                Mode::Regressor => {
                    let yhat = -self.scale_a * eta;
                    let r = yhat - y;
                    loss += r * r;
                    -2.0 * self.scale_a * r
                }
            };
            for &j in rows {
                grad[j as usize] += d;
            }
        }
        loss
    }

    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.target.len();
        let chunks: Vec<(f64, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut g = vec![0.0; self.rules];
                let l = self.chunk(theta, c * CHUNK..((c + 1) * CHUNK).min(n), &mut g);
                (l, g)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.rules];
        for (l, g) in chunks {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        for (j, &t) in theta.iter().enumerate() {
            let psi = sigmoid(t);
            loss += self.lambda * (psi - 0.5).powi(2);
            grad[j] += 2.0 * self.lambda * (psi - 0.5) * psi * (1.0 - psi);
        }
        (loss, grad)
    }
}

fn thetas(model: &RuleModel) -> Vec<f64> {
    model.rules().iter().map(|r| r.log_odds()).collect()
}

/// Regularized loss of `model` on `data` under `config.mode`.
pub fn objective(model: &RuleModel, data: &BinaryDataset, config: &CalibrationConfig) -> Result<f64> {
    let problem = Problem::new(model, data, config)?;
    Ok(problem.evaluate(&thetas(model)).0)
}

/// Analytic gradient with respect to the rule log-odds, in rule order.
pub fn gradient(model: &RuleModel, data: &BinaryDataset, config: &CalibrationConfig) -> Result<Vec<f64>> {
    let problem = Problem::new(model, data, config)?;
    Ok(problem.evaluate(&thetas(model)).1)
}

/// Largest relative difference between the analytic gradient and central
/// differences with step `h`, each coordinate measured against
/// `max(|g_j|, 1e-12)`.
pub fn finite_diff_check(
    model: &RuleModel,
    data: &BinaryDataset,
    config: &CalibrationConfig,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {h}")));
    }
    let problem = Problem::new(model, data, config)?;
    let theta = thetas(model);
    let (_, grad) = problem.evaluate(&theta);
    let mut worst: f64 = 0.0;
    for j in 0..theta.len() {
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let fd = (problem.evaluate(&plus).0 - problem.evaluate(&minus).0) / (2.0 * h);
        worst = worst.max((fd - grad[j]).abs() / grad[j].abs().max(1e-12));
    }
    Ok(worst)
}

/// Fits every rule weight, starting from all weights at 0.5.
///
/// The returned model is in `config.mode`. If the line search fails the best
/// iterate so far is returned with `converged = false`.
pub fn calibrate(
    model: &RuleModel,
    data: &BinaryDataset,
    config: &CalibrationConfig,
) -> Result<(RuleModel, CalibrationReport)> {
    let problem = Problem::new(model, data, config)?;
    let start = vec![0.0; problem.rules];
    let (f0, g0) = problem.evaluate(&start);
    if !f0.is_finite() || g0.iter().any(|g| !g.is_finite()) {
        return Err(Error::Calibration(format!(
            "objective is not finite at the starting point (value {f0})"
        )));
    }
    let opts = LbfgsOptions {
        memory: config.memory,
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..LbfgsOptions::default()
    };
    let result = lbfgs::minimize(|t| problem.evaluate(t), start, &opts);
    if result.termination != Termination::Converged {
        log::warn!(
            "calibration stopped after {} iterations ({:?}), gradient norm {:.3e}",
            result.iterations,
            result.termination,
            inf_norm(&result.gradient)
        );
    }
    let rules = model
        .rules()
        .iter()
        .zip(&result.x)
        .map(|(r, &t)| r.clone().with_weight(sigmoid(t)))
        .collect::<Result<Vec<_>>>()?;
    let fitted = model.with_rules(rules)?.with_mode(config.mode);
    let a = fitted.scale_a();
    let report = CalibrationReport {
        iterations: result.iterations,
        objective: result.value,
        gradient_norm: inf_norm(&result.gradient),
        converged: result.termination == Termination::Converged,
        lambda: problem.lambda,
        objective_history: result.history,
        rules: fitted
            .rules()
            .iter()
            .map(|r| RuleWeight {
                id: r.id.clone(),
                label: r.label.clone(),
                weight: r.weight(),
                points: r.points(a),
            })
            .collect(),
    };
    Ok((fitted, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Literal, Rule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(weights: &[f64], features: usize, mode: Mode) -> RuleModel {
        let mut rules: Vec<Rule> = weights[..weights.len() - 1]
            .iter()
            .enumerate()
            .map(|(j, &w)| Rule::new(format!("R{}", j + 1), format!("f{j}"), vec![Literal::positive(j % features)], w).unwrap())
            .collect();
        rules.push(Rule::intercept("R0", weights[weights.len() - 1]).unwrap());
        RuleModel::new(rules, 1.0, mode, (0..features).map(|j| format!("f{j}")).collect()).unwrap()
    }

    fn random_data(n: usize, features: usize, binary: bool, seed: u64) -> BinaryDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..features).map(|_| rng.random_bool(0.4)).collect()).collect();
        let y = (0..n)
            .map(|_| if binary { f64::from(u8::from(rng.random_bool(0.3))) } else { rng.random_range(-2.0..2.0) })
            .collect();
        BinaryDataset::from_rows(&rows, (0..features).map(|j| format!("f{j}")).collect(), y).unwrap()
    }

    #[test]
    fn regressor_zero_target_zero_loss() {
        let data = random_data(50, 3, true, 1).with_target(vec![0.0; 50]).unwrap();
        let m = model(&[0.5, 0.5, 0.5], 3, Mode::Regressor);
        let cfg = CalibrationConfig::new(Mode::Regressor).with_lambda(7.0);
        assert_eq!(objective(&m, &data, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn intercept_at_mean_is_entropy() {
        let data = random_data(400, 1, true, 2);
        let ybar = data.target().iter().sum::<f64>() / 400.0;
        let m = model(&[ybar], 1, Mode::Classifier);
        let cfg = CalibrationConfig::new(Mode::Classifier).with_lambda(0.0);
        let h = -(ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln());
        assert!((objective(&m, &data, &cfg).unwrap() - 400.0 * h).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (mode, binary) in [(Mode::Classifier, true), (Mode::Regressor, false)] {
            let data = random_data(200, 4, binary, 3);
            let m = model(&[0.3, 0.8, 0.55, 0.6, 0.2], 4, mode);
            let cfg = CalibrationConfig::new(mode).with_lambda(0.7);
            assert!(finite_diff_check(&m, &data, &cfg, 1e-5).unwrap() < 1e-6);
            assert!(finite_diff_check(&m, &data, &cfg, 1e-1).unwrap() > 1e-6);
        }
    }

    #[test]
    fn untriggered_rule_has_zero_data_gradient() {
        let data = random_data(100, 2, true, 4);
        let names = vec!["f0".to_string(), "f1".to_string(), "never".to_string()];
        let rows: Vec<Vec<bool>> = data.records().map(|r| vec![r[0], r[1], false]).collect();
        let data = BinaryDataset::from_rows(&rows, names.clone(), data.target().to_vec()).unwrap();
        let rules = vec![
            Rule::new("R1", "never", vec![Literal::positive(2)], 0.7).unwrap(),
            Rule::intercept("R0", 0.4).unwrap(),
        ];
        let m = RuleModel::new(rules, 1.0, Mode::Classifier, names).unwrap();
        let g = gradient(&m, &data, &CalibrationConfig::new(Mode::Classifier).with_lambda(0.0)).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn intercept_only_recovers_the_base_rate() {
        let data = random_data(5000, 1, true, 5);
        let ybar = data.target().iter().sum::<f64>() / 5000.0;
        let (fitted, report) = calibrate(
            &model(&[0.5], 1, Mode::Classifier),
            &data,
            &CalibrationConfig::new(Mode::Classifier).with_lambda(0.0),
        )
        .unwrap();
        assert!(report.converged, "{report:?}");
        assert!((fitted.intercept().weight() - ybar).abs() < 1e-6);
    }

    #[test]
    fn duplicate_rules_share_weight() {
        let data = random_data(3000, 2, true, 6);
        let rules = vec![
            Rule::new("A", "f0", vec![Literal::positive(0)], 0.5).unwrap(),
            Rule::new("B", "f0", vec![Literal::positive(0)], 0.5).unwrap(),
            Rule::intercept("R0", 0.5).unwrap(),
        ];
        let m = RuleModel::new(rules, 1.0, Mode::Classifier, vec!["f0".into(), "f1".into()]).unwrap();
        let (fitted, _) = calibrate(&m, &data, &CalibrationConfig::new(Mode::Classifier).with_lambda(1.0)).unwrap();
        assert!((fitted.rules()[0].weight() - fitted.rules()[1].weight()).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_pins_weights_at_half() {
        let data = random_data(500, 3, true, 7);
        let (fitted, _) = calibrate(
            &model(&[0.5, 0.5, 0.5, 0.5], 3, Mode::Classifier),
            &data,
            &CalibrationConfig::new(Mode::Classifier).with_lambda(1e9),
        )
        .unwrap();
        for r in fitted.rules() {
            assert!((r.weight() - 0.5).abs() < 1e-4, "{}", r.weight());
        }
    }

    #[test]
    fn classifier_rejects_continuous_target() {
        let data = random_data(20, 2, false, 8);
        let err = calibrate(&model(&[0.5, 0.5], 2, Mode::Classifier), &data, &CalibrationConfig::new(Mode::Classifier));
        assert!(matches!(err, Err(Error::Mode(_))));
    }

    #[test]
    fn default_lambda_scales_with_size() {
        let cfg = CalibrationConfig::new(Mode::Regressor);
        assert_eq!(cfg.effective_lambda(16, 1000), 1.6e-5);
    }
}
