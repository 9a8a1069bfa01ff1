//! A loaded pipeline plus the dataset it is applied to. The command line and
//! the HTTP service both answer through this type, so identical requests
//! produce identical documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    band_report, cluster_quality, default_band_cuts, frequent_rule_combos, impact_table,
    BandReport, ImpactRow, Refinement, RuleCombo,
};
use crate::correction::{CorrectedScores, CorrectionPipeline};
use crate::data::{transform, BinaryDataset, RawDataset, VariableBinning};
use crate::error::{Error, Result};
use crate::model::{Explanation, Mode};
use crate::scenario::{scenario_report, ScenarioReport, ScenarioSpec};

/// Number of equal-count bands used when no cuts are given.
pub const DEFAULT_BANDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelView {
    pub scale_a: f64,
    pub mode: Mode,
    pub records: usize,
    /// Impact-sorted, intercept last.
    pub rules: Vec<ImpactRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuery {
    pub min_support: f64,
    pub max_size: usize,
    /// Gap above which a refinement is looked for.
    pub gap_threshold: f64,
}

impl Default for ClusterQuery {
    fn default() -> Self {
        Self {
            min_support: 0.05,
            max_size: 2,
            gap_threshold: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    #[serde(flatten)]
    pub combo: RuleCombo,
    pub refinement: Option<Refinement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordExplanation {
    pub record_id: String,
    pub m1_logodds: f64,
    pub correction_logodds: f64,
    pub combined_logodds: f64,
    pub probability: f64,
    /// Per-rule contributions of the correction layer, in points.
    pub correction: Explanation,
}

pub struct Session {
    pipeline: CorrectionPipeline,
    data: RawDataset,
    binary: BinaryDataset,
    scores: CorrectedScores,
}

impl Session {
    pub fn new(pipeline: CorrectionPipeline, data: RawDataset) -> Result<Self> {
        let binary = transform(pipeline.discretizer(), &data)?;
        let scores = pipeline.apply_corrected(&data)?;
        Ok(Self {
            pipeline,
            data,
            binary,
            scores,
        })
    }

    /// Loads a pipeline document and a CSV typed by the pipeline's binning.
    pub fn load(pipeline: impl AsRef<Path>, data: impl AsRef<Path>) -> Result<Self> {
        let pipeline = CorrectionPipeline::load(pipeline)?;
        let data = RawDataset::load_csv(data, &pipeline.discretizer().schema())?;
        Self::new(pipeline, data)
    }

    pub fn pipeline(&self) -> &CorrectionPipeline {
        &self.pipeline
    }

    pub fn data(&self) -> &RawDataset {
        &self.data
    }

    pub fn scores(&self) -> &CorrectedScores {
        &self.scores
    }

    pub fn model_view(&self) -> Result<ModelView> {
        let model = self.pipeline.correction();
        Ok(ModelView {
            scale_a: model.scale_a(),
            mode: model.mode(),
            records: self.data.len(),
            rules: impact_table(model, &self.binary)?,
        })
    }

    /// The variable used for bands when none is named: `cscore` when binned,
    /// otherwise the first numeric variable.
    pub fn default_band_variable(&self) -> Result<String> {
        let vars = &self.pipeline.discretizer().variables;
        let numeric = |v: &&VariableBinning| matches!(v, VariableBinning::Numeric { .. });
        vars.iter()
            .filter(numeric)
            .find(|v| v.name() == "cscore")
            .or_else(|| vars.iter().find(numeric))
            .map(|v| v.name().to_string())
            .ok_or_else(|| Error::Config("the pipeline bins no numeric variable".into()))
    }

    fn band_axis(&self, variable: Option<&str>, cuts: Option<&[f64]>) -> Result<(String, Vec<f64>)> {
        let variable = match variable {
            Some(v) => v.to_string(),
            None => self.default_band_variable()?,
        };
        let cuts = match cuts {
            Some(c) => c.to_vec(),
            None => default_band_cuts(&self.data, &variable, DEFAULT_BANDS)?,
        };
        Ok((variable, cuts))
    }

    pub fn bands(&self, variable: Option<&str>, cuts: Option<&[f64]>) -> Result<BandReport> {
        let (variable, cuts) = self.band_axis(variable, cuts)?;
        band_report(&self.pipeline, &self.data, &variable, &cuts)
    }

    /// Frequent combinations of correction rules, each with its quality check
    /// against `M1 + C` probabilities.
    pub fn clusters(&self, query: &ClusterQuery) -> Result<Vec<ClusterEntry>> {
        let model = self.pipeline.correction();
        let p = &self.scores.probability;
        let combos = frequent_rule_combos(model, &self.binary, p, query.min_support, query.max_size)?;
        combos
            .into_iter()
            .map(|combo| {
                let q = cluster_quality(&combo.rules, model, &self.binary, p, query.gap_threshold)?;
                Ok(ClusterEntry {
                    combo,
                    refinement: q.refinement,
                })
            })
            .collect()
    }

    /// `None` when the record id is not in the dataset.
    pub fn explain(&self, record_id: &str) -> Result<Option<RecordExplanation>> {
        let Some(i) = self.data.position_of(record_id) else {
            return Ok(None);
        };
        let correction = self
            .pipeline
            .correction()
            .explain(record_id, self.binary.record(i))?;
        Ok(Some(RecordExplanation {
            record_id: record_id.into(),
            m1_logodds: self.scores.m1[i],
            correction_logodds: self.scores.correction[i],
            combined_logodds: self.scores.combined[i],
            probability: self.scores.probability[i],
            correction,
        }))
    }

    pub fn scenario(
        &self,
        spec: &ScenarioSpec,
        variable: Option<&str>,
        cuts: Option<&[f64]>,
    ) -> Result<ScenarioReport> {
        let (variable, cuts) = self.band_axis(variable, cuts)?;
        scenario_report(&self.pipeline, spec, &self.data, &variable, &cuts)
    }
}
