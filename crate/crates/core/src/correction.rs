//! Correction layers: a rule regressor `C` fitted to the log-odds gap between
//! a retrained model `M2` and an outdated model `M1`, so that `M1 + C`
//! approximates `M2` additively and every rule explains part of the drift.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate, CalibrationConfig, CalibrationReport};
use crate::data::{
    fit_discretizer, split_indices, transform, BinaryDataset, DataConfig, DiscretizationSpec,
    RawDataset,
};
use crate::error::{Error, Result};
use crate::io::{sha256_file, sha256_hex};
use crate::mining::{model_from_candidates, select_candidates, CandidateRule, MiningConfig};
use crate::model::{logit, sigmoid, Mode, RuleModel};

/// External probabilities are clamped to `[EXTERNAL_CLAMP, 1 - EXTERNAL_CLAMP]` before the logit.
pub const EXTERNAL_CLAMP: f64 = 1e-9;

/// Ridge strength used when fitting internal base models. One-hot bins of a
/// variable are collinear with the intercept; a light ridge makes the fit
/// well posed without visibly moving predictions.
pub const BASE_MODEL_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSpace {
    Probability,
    Logodds,
}

/// A base model: either a rule classifier with its own discretizer, or a file
/// of per-record scores produced elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseScorer {
    Internal {
        model: RuleModel,
        discretizer: DiscretizationSpec,
    },
    External {
        path: PathBuf,
        sha256: String,
        /// Log-odds by record id; re-read from `path` when a pipeline loads.
        #[serde(skip)]
        scores: HashMap<String, f64>,
    },
}

impl BaseScorer {
    pub fn internal(model: RuleModel, discretizer: DiscretizationSpec) -> Result<Self> {
        if model.feature_names() != discretizer.feature_names().as_slice() {
            return Err(Error::Structure(
                "base model features do not match its discretizer".into(),
            ));
        }
        Ok(BaseScorer::Internal { model, discretizer })
    }

    /// Reads a score file with columns `record_id,score,space`, where space is
    /// `probability` or `logodds`.
    pub fn load_external(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let sha256 = sha256_file(path)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let scores = read_scores(file, &path.display().to_string())?;
        Ok(BaseScorer::External {
            path: path.to_path_buf(),
            sha256,
            scores,
        })
    }

    /// Re-reads an external score file, resolving relative paths against
    /// `base_dir`, and checks its content hash.
    fn resolve(&mut self, base_dir: &Path) -> Result<()> {
        if let BaseScorer::External {
            path,
            sha256,
            scores,
        } = self
        {
            let full = if path.is_relative() {
                base_dir.join(&*path)
            } else {
                path.clone()
            };
            let actual = sha256_file(&full)?;
            if actual != *sha256 {
                return Err(Error::Config(format!(
                    "score file {} changed since the pipeline was built (sha256 {actual}, expected {sha256})",
                    full.display()
                )));
            }
            let file = File::open(&full).map_err(|e| Error::io(&full, e))?;
            *scores = read_scores(file, &full.display().to_string())?;
        }
        Ok(())
    }

    fn external_scores(scores: &HashMap<String, f64>, ids: &[String]) -> Result<Vec<f64>> {
        let missing: Vec<String> = ids.iter().filter(|id| !scores.contains_key(*id)).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingRecords { ids: missing });
        }
        Ok(ids.iter().map(|id| scores[id]).collect())
    }

    /// Per-record target log-odds.
    pub fn score(&self, data: &RawDataset) -> Result<Vec<f64>> {
        match self {
            BaseScorer::Internal { model, discretizer } => {
                model.log_odds_dataset(&transform(discretizer, data)?)
            }
            BaseScorer::External { scores, .. } => Self::external_scores(scores, data.record_ids()),
        }
    }

    /// Per-record target log-odds for an already binarized dataset; internal
    /// scorers require the dataset to use their feature space.
    pub fn score_binary(&self, data: &BinaryDataset) -> Result<Vec<f64>> {
        match self {
            BaseScorer::Internal { model, .. } => {
                if data.feature_names() != model.feature_names() {
                    return Err(Error::Structure(
                        "dataset features differ from the base model's".into(),
                    ));
                }
                model.log_odds_dataset(data)
            }
            BaseScorer::External { scores, .. } => Self::external_scores(scores, data.record_ids()),
        }
    }
}

fn read_scores(reader: impl std::io::Read, source: &str) -> Result<HashMap<String, f64>> {
    #[derive(Deserialize)]
    struct Row {
        record_id: String,
        score: f64,
        space: ScoreSpace,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = HashMap::new();
    let mut problems = Vec::new();
    for (k, row) in rdr.deserialize::<Row>().enumerate() {
        let line = k + 2;
        match row {
            Err(e) => problems.push(format!("line {line}: {e}")),
            Ok(r) => {
                let value = match r.space {
                    ScoreSpace::Logodds if r.score.is_finite() => Some(r.score),
                    ScoreSpace::Probability if (0.0..=1.0).contains(&r.score) => {
                        Some(logit(r.score.clamp(EXTERNAL_CLAMP, 1.0 - EXTERNAL_CLAMP)))
                    }
                    _ => None,
                };
                match value {
                    Some(v) => {
                        if out.insert(r.record_id.clone(), v).is_some() {
                            problems.push(format!("line {line}: duplicate record id {}", r.record_id));
                        }
                    }
                    None => problems.push(format!(
                        "line {line}: score {} is not a valid {:?} value",
                        r.score, r.space
                    )),
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
    Ok(out)
}

/// Writes scores in the external score-file format.
pub fn write_scores(
    writer: impl std::io::Write,
    ids: &[String],
    scores: &[f64],
    space: ScoreSpace,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["record_id", "score", "space"])?;
    let tag = match space {
        ScoreSpace::Probability => "probability",
        ScoreSpace::Logodds => "logodds",
    };
    for (id, s) in ids.iter().zip(scores) {
        w.write_record([id.as_str(), &s.to_string(), tag])?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}

/// `z = s2 - s1` in log-odds.
pub fn residual_target(m1: &[f64], m2: &[f64]) -> Result<Vec<f64>> {
    if m1.len() != m2.len() {
        return Err(Error::Structure(format!(
            "score vectors differ in length: {} vs {}",
            m1.len(),
            m2.len()
        )));
    }
    Ok(m1.iter().zip(m2).map(|(a, b)| b - a).collect())
}

/// Log-odds differences expressed as correction-model points, `-a z`.
pub fn to_points(z: &[f64], scale_a: f64) -> Vec<f64> {
    z.iter().map(|v| -scale_a * v).collect()
}

/// Configuration of the two splits the workflow uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDigest {
    pub role: String,
    pub records: usize,
    pub sha256: String,
}

impl DatasetDigest {
    pub fn of(role: &str, data: &RawDataset) -> Result<Self> {
        let mut buf = Vec::new();
        data.to_csv(&mut buf)?;
        Ok(Self {
            role: role.into(),
            records: data.len(),
            sha256: sha256_hex(&buf),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub datasets: Vec<DatasetDigest>,
    pub data_config: DataConfig,
    pub mining: MiningConfig,
    pub calibration: CalibrationConfig,
    pub split: SplitConfig,
}

/// Tag for the space in which `z` lives; only log-odds is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZSpace {
    Logodds,
}

/// Base scorers, correction regressor and its discretizer. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PipelineDocument", into = "PipelineDocument")]
pub struct CorrectionPipeline {
    m1: BaseScorer,
    m2: BaseScorer,
    correction: RuleModel,
    discretizer: DiscretizationSpec,
    provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PipelineDocument {
    z_space: ZSpace,
    m1: BaseScorer,
    m2: BaseScorer,
    correction: RuleModel,
    discretizer: DiscretizationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl From<CorrectionPipeline> for PipelineDocument {
    fn from(p: CorrectionPipeline) -> Self {
        Self {
            z_space: ZSpace::Logodds,
            m1: p.m1,
            m2: p.m2,
            correction: p.correction,
            discretizer: p.discretizer,
            provenance: p.provenance,
        }
    }
}

impl TryFrom<PipelineDocument> for CorrectionPipeline {
    type Error = Error;

    fn try_from(d: PipelineDocument) -> Result<Self> {
        CorrectionPipeline::new(d.m1, d.m2, d.correction, d.discretizer, d.provenance)
    }
}

/// Per-record scores of `M1 + C`, all in log-odds except `probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedScores {
    pub record_ids: Vec<String>,
    pub m1: Vec<f64>,
    pub correction: Vec<f64>,
    pub combined: Vec<f64>,
    pub probability: Vec<f64>,
}

impl CorrectionPipeline {
    pub fn new(
        m1: BaseScorer,
        m2: BaseScorer,
        correction: RuleModel,
        discretizer: DiscretizationSpec,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        if correction.mode() != Mode::Regressor {
            return Err(Error::Mode("the correction layer must be a regressor".into()));
        }
        if correction.feature_names() != discretizer.feature_names().as_slice() {
            return Err(Error::Structure(
                "correction model features do not match the discretizer".into(),
            ));
        }
        for m in [&m1, &m2] {
            if let BaseScorer::Internal { model, discretizer } = m {
                if model.feature_names() != discretizer.feature_names().as_slice() {
                    return Err(Error::Structure(
                        "base model features do not match its discretizer".into(),
                    ));
                }
            }
        }
        Ok(Self {
            m1,
            m2,
            correction,
            discretizer,
            provenance,
        })
    }

    pub fn m1(&self) -> &BaseScorer {
        &self.m1
    }

    pub fn m2(&self) -> &BaseScorer {
        &self.m2
    }

    pub fn correction(&self) -> &RuleModel {
        &self.correction
    }

    pub fn discretizer(&self) -> &DiscretizationSpec {
        &self.discretizer
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Same pipeline with another correction model (e.g. a scenario variant).
    pub fn with_correction(&self, correction: RuleModel) -> Result<Self> {
        Self::new(
            self.m1.clone(),
            self.m2.clone(),
            correction,
            self.discretizer.clone(),
            self.provenance.clone(),
        )
    }

    /// Loads a pipeline document; external score files are resolved relative
    /// to the document's directory and checked against their hashes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut p: CorrectionPipeline = serde_json::from_str(text)?;
        p.m1.resolve(base_dir)?;
        p.m2.resolve(base_dir)?;
        Ok(p)
    }

    pub fn score_m1(&self, data: &RawDataset) -> Result<Vec<f64>> {
        self.m1.score(data)
    }

    pub fn score_m2(&self, data: &RawDataset) -> Result<Vec<f64>> {
        self.m2.score(data)
    }

    /// Correction in log-odds, `-predict_value / a`, per record.
    pub fn correction_logodds(&self, data: &RawDataset) -> Result<Vec<f64>> {
        self.correction.log_odds_dataset(&transform(&self.discretizer, data)?)
    }

    /// `M1 + C` for every record of `data`.
    pub fn apply_corrected(&self, data: &RawDataset) -> Result<CorrectedScores> {
        let m1 = self.score_m1(data)?;
        let correction = self.correction_logodds(data)?;
        Ok(combine(data.record_ids().to_vec(), m1, correction))
    }
}

fn combine(record_ids: Vec<String>, m1: Vec<f64>, correction: Vec<f64>) -> CorrectedScores {
    let combined: Vec<f64> = m1.iter().zip(&correction).map(|(a, c)| a + c).collect();
    let probability = combined.iter().map(|&x| sigmoid(x)).collect();
    CorrectedScores {
        record_ids,
        m1,
        correction,
        combined,
        probability,
    }
}

/// Records sorted by id, so downstream sums do not depend on input order.
fn canonical(data: &RawDataset) -> RawDataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.record_ids()[a].cmp(&data.record_ids()[b]));
    data.subset(&idx)
}

/// Train/test halves of a raw dataset under `split`.
pub fn split_raw(data: &RawDataset, split: &SplitConfig) -> Result<(RawDataset, RawDataset)> {
    let (train, test) = split_indices(data.record_ids(), split.test_fraction, split.seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Fits an internal base model: every single-bin rule with enough support,
/// calibrated as a classifier on `data`.
pub fn train_base_model(data: &RawDataset, config: &DataConfig, min_support: f64) -> Result<BaseScorer> {
    let data = canonical(data);
    let discretizer = fit_discretizer(&data, config)?;
    let binary = transform(&discretizer, &data)?;
    let mining = MiningConfig {
        max_rules: binary.feature_count().max(1),
        per_variable_cap: usize::MAX,
        ..MiningConfig::new(1)?.with_min_support(min_support)
    };
    let chosen = select_candidates(&binary, &mining)?;
    let model = model_from_candidates(&chosen, binary.feature_names(), Mode::Classifier, mining.scale_a)?;
    let calib = CalibrationConfig::new(Mode::Classifier).with_lambda(BASE_MODEL_LAMBDA);
    let (model, report) = calibrate(&model, &binary, &calib)?;
    log::info!(
        "base model: {} rules, objective {:.4}, converged {}",
        model.rules().len(),
        report.objective,
        report.converged
    );
    BaseScorer::internal(model, discretizer)
}

/// Everything the workflow needs before the correction layer is sized:
/// discretizer, ranked rule selection and the split regime-2 data with both
/// base scores.
pub struct CorrectionContext {
    pub discretizer: DiscretizationSpec,
    pub ranked: Vec<CandidateRule>,
    pub train: BinaryDataset,
    pub test: RawDataset,
    pub test_binary: BinaryDataset,
    pub m1_train: Vec<f64>,
    pub m2_train: Vec<f64>,
    pub m1_test: Vec<f64>,
    pub m2_test: Vec<f64>,
    pub scale_a: f64,
    provenance: Provenance,
}

impl CorrectionContext {
    /// Fits the discretizer and mines on the combined data, splits regime 2
    /// and scores both halves with both base models.
    #[allow(clippy::too_many_arguments)]
    pub fn prepare(
        x1: &RawDataset,
        x2: &RawDataset,
        m1: &BaseScorer,
        m2: &BaseScorer,
        mining: &MiningConfig,
        calib: &CalibrationConfig,
        data_config: &DataConfig,
    ) -> Result<Self> {
        mining.validate()?;
        calib.validate()?;
        let x1 = canonical(x1);
        let x2 = canonical(x2);
        let combined = x1.concat(&x2)?;
        let discretizer = fit_discretizer(&combined, data_config)?;
        let combined_binary = transform(&discretizer, &combined)?;
        if !combined_binary.target_is_binary() {
            return Err(Error::Mode("mining on the combined data needs a 0/1 target".into()));
        }
        let ranked = select_candidates(&combined_binary, mining)?;

        let split = SplitConfig {
            test_fraction: data_config.test_fraction,
            seed: data_config.seed,
        };
        let (train_raw, test) = split_raw(&x2, &split)?;
        let m1_train = m1.score(&train_raw)?;
        let m2_train = m2.score(&train_raw)?;
        let z = to_points(&residual_target(&m1_train, &m2_train)?, mining.scale_a);
        let train = transform(&discretizer, &train_raw)?.with_target(z)?;
        let test_binary = transform(&discretizer, &test)?;
        let m1_test = m1.score(&test)?;
        let m2_test = m2.score(&test)?;
        let provenance = Provenance {
            datasets: vec![DatasetDigest::of("regime1", &x1)?, DatasetDigest::of("regime2", &x2)?],
            data_config: data_config.clone(),
            mining: mining.clone(),
            calibration: calib.clone(),
            split,
        };
        Ok(Self {
            discretizer,
            ranked,
            train,
            test,
            test_binary,
            m1_train,
            m2_train,
            m1_test,
            m2_test,
            scale_a: mining.scale_a,
            provenance,
        })
    }

    /// Correction layer from the top `k` ranked rules, calibrated as a
    /// regressor on the regime-2 training half.
    pub fn layer(&self, k: usize, calib: &CalibrationConfig) -> Result<(RuleModel, CalibrationReport)> {
        let k = k.min(self.ranked.len());
        let model = model_from_candidates(
            &self.ranked[..k],
            self.discretizer.feature_names().as_slice(),
            Mode::Regressor,
            self.scale_a,
        )?;
        let calib = CalibrationConfig {
            mode: Mode::Regressor,
            ..calib.clone()
        };
        calibrate(&model, &self.train, &calib)
    }

    /// `M1 + C` on the held-out regime-2 records.
    pub fn corrected_test(&self, correction: &RuleModel) -> Result<CorrectedScores> {
        let c = correction.log_odds_dataset(&self.test_binary)?;
        Ok(combine(self.test.record_ids().to_vec(), self.m1_test.clone(), c))
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// The result of [`build_correction`].
pub struct CorrectionBuild {
    pub pipeline: CorrectionPipeline,
    pub report: CalibrationReport,
    pub context: CorrectionContext,
}

/// Runs the whole workflow: discretize and mine on the combined data, then
/// calibrate the mined rules on the score gap over the regime-2 train split.
pub fn build_correction(
    x1: &RawDataset,
    x2: &RawDataset,
    m1: &BaseScorer,
    m2: &BaseScorer,
    mining: &MiningConfig,
    calib: &CalibrationConfig,
    data_config: &DataConfig,
) -> Result<CorrectionBuild> {
    let context = CorrectionContext::prepare(x1, x2, m1, m2, mining, calib, data_config)?;
    if context.ranked.is_empty() {
        log::warn!("no rules mined; the correction is a pure offset");
    }
    let (correction, report) = context.layer(mining.max_rules, calib)?;
    let pipeline = CorrectionPipeline::new(
        m1.clone(),
        m2.clone(),
        correction,
        context.discretizer.clone(),
        Some(context.provenance.clone()),
    )?;
    Ok(CorrectionBuild {
        pipeline,
        report,
        context,
    })
}
