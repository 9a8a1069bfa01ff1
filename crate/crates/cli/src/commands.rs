//! Subcommands. Every option can come from a JSON or TOML file given with
//! `--config`; flags override file values. Each run writes its outputs and
//! a `manifest.json` into `--out`, or nothing at all if it fails.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use prm_drift::analysis::{auc, band_report, default_band_cuts, impact_table, learning_curve, ImpactRow};
use prm_drift::bundled::demo_pipeline;
use prm_drift::calibrate::{calibrate, CalibrationConfig};
use prm_drift::correction::{
    build_correction, split_raw, train_base_model, BaseScorer, CorrectionContext, CorrectionPipeline,
};
use prm_drift::data::synthetic::{generate_synthetic, synthetic_data_config, SyntheticConfig};
use prm_drift::data::{fit_discretizer, transform, transform_with_report, DataConfig, DiscretizationSpec, RawDataset};
use prm_drift::io::read_config;
use prm_drift::mining::{select_candidates, model_from_candidates, MiningConfig};
use prm_drift::scenario::ScenarioSpec;
use prm_drift::session::{ClusterQuery, Session};
use prm_drift::{Mode, RuleModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::manifest::OutputDir;
use crate::service::parse_cuts;

#[derive(Debug, Parser)]
#[command(name = "prm", version, about = "Probabilistic rule models as correction layers for drifting credit-risk models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the two-regime synthetic mortgage data.
    Synth(SynthArgs),
    /// Fit a discretizer and write the binary feature matrix.
    Discretize(DiscretizeArgs),
    /// Mine candidate rules into an uncalibrated model.
    Mine(MineArgs),
    /// Calibrate the weights of a rule model.
    Calibrate(CalibrateArgs),
    /// Build a correction layer between two regimes.
    Correct(CorrectArgs),
    /// AUC, learning curve and band calibration of a correction pipeline.
    Evaluate(EvaluateArgs),
    /// Frequent rule combinations and their calibration.
    Cluster(ClusterArgs),
    /// Rescore a dataset under a what-if scenario.
    Scenario(ScenarioArgs),
    /// Serve a pipeline over HTTP.
    Serve(ServeArgs),
}

/// Options shared by every command that writes files.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON or TOML file with option values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn out(&self) -> Result<OutputDir> {
        let dir = self.out.as_ref().ok_or_else(|| anyhow!("--out is required"))?;
        OutputDir::create(dir)
    }
}

/// Overlays the non-null fields of `flags` on the config file's values.
fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let mut merged = match config {
        Some(p) => read_config::<serde_json::Value>(p)?,
        None => serde_json::json!({}),
    };
    let map = merged
        .as_object_mut()
        .ok_or_else(|| anyhow!("config file must hold a table of options"))?;
    if let serde_json::Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_json::from_value(merged).context("invalid options")
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| anyhow!("--{} is required", name.replace('_', "-")))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "classifier" => Ok(Mode::Classifier),
        "regressor" => Ok(Mode::Regressor),
        _ => Err(format!("unknown mode {s:?}; use classifier or regressor")),
    }
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_counts(text: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().context("range start")?;
        let b: usize = b.trim().trim_start_matches('=').parse().context("range end")?;
        if a > b {
            bail!("empty range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|v| v.trim().parse().with_context(|| format!("{v:?} is not a count")))
        .collect()
}

fn load_data(path: &Path, spec: &DiscretizationSpec) -> Result<RawDataset> {
    RawDataset::load_csv(path, &spec.schema()).with_context(|| format!("loading {}", path.display()))
}

fn load_with_config(path: &Path, cfg: &DataConfig) -> Result<RawDataset> {
    RawDataset::load_csv(path, &cfg.schema()).with_context(|| format!("loading {}", path.display()))
}

fn rule_table_csv(rows: &[ImpactRow], buf: &mut Vec<u8>) -> prm_drift::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["rule_id", "definition", "points", "coverage", "impact"])?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.definition.clone(),
            format!("{:.2}", r.points),
            r.coverage.to_string(),
            r.impact.to_string(),
        ])?;
    }
    w.flush().map_err(|e| prm_drift::Error::Io {
        path: "<rules>".into(),
        source: e,
    })?;
    Ok(())
}

fn config_echo<T: Serialize>(args: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(args)?)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    /// Records in regime 1.
    #[arg(long)]
    pub regime1: Option<usize>,
    /// Records in regime 2.
    #[arg(long)]
    pub regime2: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Same truth in both regimes and no acceptance filter.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub null_drift: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: SynthOptions,
}

fn synth(args: &SynthArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let (n1, n2, seed) = (o.regime1.unwrap_or(50_000), o.regime2.unwrap_or(50_000), o.seed.unwrap_or(7));
    let cfg = if o.null_drift.unwrap_or(false) {
        SyntheticConfig::null_drift(n1, n2, seed)
    } else {
        SyntheticConfig::two_regime(n1, n2, seed)
    };
    let (d1, d2, truth) = generate_synthetic(&cfg)?;
    let mut out = args.common.out()?;
    out.write_with("regime1.csv", |b| d1.to_csv(b))?;
    out.write_with("regime2.csv", |b| d2.to_csv(b))?;
    out.write_json("truth.json", &truth)?;
    out.write_json("data_config.json", &synthetic_data_config())?;
    out.finish("synth", config_echo(&o)?, &[])?;
    Ok(())
}

// ---------------------------------------------------------------- discretize

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizeOptions {
    /// CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Data configuration (variables, cuts, groups, target).
    #[arg(long)]
    pub data_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DiscretizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: DiscretizeOptions,
}

fn discretize(args: &DiscretizeArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let (data_path, cfg_path) = (need(&o.data, "data")?, need(&o.data_config, "data_config")?);
    let cfg = DataConfig::load(&cfg_path)?;
    let data = load_with_config(&data_path, &cfg)?;
    let spec = fit_discretizer(&data, &cfg)?;
    let (binary, report) = transform_with_report(&spec, &data)?;
    let mut out = args.common.out()?;
    out.write_json("discretizer.json", &spec)?;
    out.write_with("binary.csv", |b| binary.to_csv(b))?;
    out.write_json("transform_report.json", &report)?;
    out.finish("discretize", config_echo(&o)?, &[data_path, cfg_path])?;
    Ok(())
}

// ---------------------------------------------------------------- mine

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningOptions {
    /// Rules to keep, excluding the intercept.
    #[arg(long)]
    pub max_rules: Option<usize>,
    /// 1 for single features, 2 to add pairs.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub min_support: Option<f64>,
    /// Most rules drawing on one raw variable.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Points scale `a`.
    #[arg(long)]
    pub scale_a: Option<f64>,
}

impl MiningOptions {
    fn config(&self, default_rules: usize) -> Result<MiningConfig> {
        let mut c = MiningConfig::new(self.max_rules.unwrap_or(default_rules))?;
        if let Some(d) = self.depth {
            c = c.with_depth(d);
        }
        if let Some(s) = self.min_support {
            c = c.with_min_support(s);
        }
        if let Some(k) = self.cap {
            c = c.with_cap(k);
        }
        if let Some(a) = self.scale_a {
            c.scale_a = a;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineOptions {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub data_config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub mining: MiningOptions,
}

#[derive(Debug, Clone, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: MineOptions,
}

fn mine(args: &MineArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let (data_path, cfg_path) = (need(&o.data, "data")?, need(&o.data_config, "data_config")?);
    let cfg = DataConfig::load(&cfg_path)?;
    let data = load_with_config(&data_path, &cfg)?;
    let spec = fit_discretizer(&data, &cfg)?;
    let binary = transform(&spec, &data)?;
    let mining = o.mining.config(16)?;
    let chosen = select_candidates(&binary, &mining)?;
    let mode = if binary.target_is_binary() { Mode::Classifier } else { Mode::Regressor };
    let model = model_from_candidates(&chosen, binary.feature_names(), mode, mining.scale_a)?;
    let mut out = args.common.out()?;
    out.write_json("discretizer.json", &spec)?;
    out.write_json("candidates.json", &chosen)?;
    out.write_json("model.json", &model)?;
    out.finish("mine", config_echo(&o)?, &[data_path, cfg_path])?;
    Ok(())
}

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    /// Ridge strength; defaults to 1e-3 * rules / records.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub gradient_tolerance: Option<f64>,
}

impl CalibrationOptions {
    fn config(&self, mode: Mode) -> Result<CalibrationConfig> {
        let mut c = CalibrationConfig::new(mode);
        c.lambda = self.lambda;
        if let Some(m) = self.max_iterations {
            c.max_iterations = m;
        }
        if let Some(t) = self.gradient_tolerance {
            c.gradient_tolerance = t;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateOptions {
    /// Rule model document.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Discretizer the model's features come from.
    #[arg(long)]
    pub discretizer: Option<PathBuf>,
    /// Overrides the model's mode.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[command(flatten)]
    #[serde(flatten)]
    pub calibration: CalibrationOptions,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: CalibrateOptions,
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let model_path = need(&o.model, "model")?;
    let data_path = need(&o.data, "data")?;
    let spec_path = need(&o.discretizer, "discretizer")?;
    let model: RuleModel = read_config(&model_path)?;
    let spec = DiscretizationSpec::load(&spec_path)?;
    let binary = transform(&spec, &load_data(&data_path, &spec)?)?;
    let cfg = o.calibration.config(o.mode.unwrap_or(model.mode()))?;
    let (fitted, report) = calibrate(&model, &binary, &cfg)?;
    if !report.converged {
        log::warn!("calibration stopped after {} iterations without converging", report.iterations);
    }
    let table = impact_table(&fitted, &binary)?;
    let mut out = args.common.out()?;
    out.write_json("model.json", &fitted)?;
    out.write_json("calibration.json", &report)?;
    out.write_with("rules.csv", |b| rule_table_csv(&table, b))?;
    out.finish("calibrate", config_echo(&o)?, &[model_path, data_path, spec_path])?;
    Ok(())
}

// ---------------------------------------------------------------- correct

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectOptions {
    /// Regime-1 (older) data.
    #[arg(long)]
    pub regime1: Option<PathBuf>,
    /// Regime-2 (recent) data.
    #[arg(long)]
    pub regime2: Option<PathBuf>,
    #[arg(long)]
    pub data_config: Option<PathBuf>,
    /// Score file for M1 (record_id,score,space); trained here when absent.
    #[arg(long)]
    pub m1: Option<PathBuf>,
    /// Score file for M2; trained here when absent.
    #[arg(long)]
    pub m2: Option<PathBuf>,
    /// Minimum bin support for rules of internally trained base models.
    #[arg(long)]
    pub base_min_support: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub mining: MiningOptions,
    #[command(flatten)]
    #[serde(flatten)]
    pub calibration: CalibrationOptions,
}

#[derive(Debug, Clone, Args)]
pub struct CorrectArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: CorrectOptions,
}

#[derive(Debug, Serialize)]
struct Evaluation {
    test_records: usize,
    auc_m1: f64,
    auc_m2: f64,
    auc_combined: f64,
}

fn correct(args: &CorrectArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let p1 = need(&o.regime1, "regime1")?;
    let p2 = need(&o.regime2, "regime2")?;
    let cfg_path = need(&o.data_config, "data_config")?;
    let cfg = DataConfig::load(&cfg_path)?;
    let d1 = load_with_config(&p1, &cfg)?;
    let d2 = load_with_config(&p2, &cfg)?;
    let mining = o.mining.config(16)?;
    let calib = o.calibration.config(Mode::Regressor)?;
    let mut inputs = vec![p1, p2, cfg_path];
    let mut out = args.common.out()?;

    let (m1, m2) = match (&o.m1, &o.m2) {
        (Some(s1), Some(s2)) => {
            let mut scorers = Vec::new();
            for (src, name) in [(s1, "m1_scores.csv"), (s2, "m2_scores.csv")] {
                let bytes = std::fs::read(src).with_context(|| format!("reading {}", src.display()))?;
                out.write(name, &bytes)?;
                let mut s = BaseScorer::load_external(out.path(name))?;
                if let BaseScorer::External { path, .. } = &mut s {
                    *path = name.into();
                }
                scorers.push(s);
                inputs.push(src.clone());
            }
            let m2 = scorers.pop().unwrap();
            (scorers.pop().unwrap(), m2)
        }
        (None, None) => {
            let split = prm_drift::correction::SplitConfig {
                test_fraction: cfg.test_fraction,
                seed: cfg.seed,
            };
            let min_support = o.base_min_support.unwrap_or(0.01);
            (
                train_base_model(&split_raw(&d1, &split)?.0, &cfg, min_support)?,
                train_base_model(&split_raw(&d2, &split)?.0, &cfg, min_support)?,
            )
        }
        _ => bail!("give both --m1 and --m2 score files, or neither"),
    };

    let build = build_correction(&d1, &d2, &m1, &m2, &mining, &calib, &cfg)?;
    if !build.report.converged {
        log::warn!("correction calibration did not converge");
    }
    let ctx = &build.context;
    let scored = ctx.corrected_test(build.pipeline.correction())?;
    let labels = ctx.test.target();
    let evaluation = Evaluation {
        test_records: ctx.test.len(),
        auc_m1: auc(&ctx.m1_test, labels)?,
        auc_m2: auc(&ctx.m2_test, labels)?,
        auc_combined: auc(&scored.combined, labels)?,
    };
    let table = impact_table(build.pipeline.correction(), &transform(build.pipeline.discretizer(), &d2)?)?;
    out.write_json("pipeline.json", &build.pipeline)?;
    out.write_json("calibration.json", &build.report)?;
    out.write_with("rules.csv", |b| rule_table_csv(&table, b))?;
    out.write_json("evaluation.json", &evaluation)?;
    out.finish("correct", config_echo(&o)?, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateOptions {
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Needed for the learning curve.
    #[arg(long)]
    pub regime1: Option<PathBuf>,
    #[arg(long)]
    pub regime2: Option<PathBuf>,
    /// Rule counts, `1..16` or `1,2,4,8`.
    #[arg(long)]
    pub learning_curve: Option<String>,
    /// Numeric variable for the band table; `cscore` by default.
    #[arg(long)]
    pub band_variable: Option<String>,
    /// Band edges, comma separated; equal-count quintiles by default.
    #[arg(long)]
    pub cuts: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: EvaluateOptions,
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let pipe_path = need(&o.pipeline, "pipeline")?;
    let p2 = need(&o.regime2, "regime2")?;
    let pipeline = CorrectionPipeline::load(&pipe_path)?;
    let d2 = load_data(&p2, pipeline.discretizer())?;
    let mut inputs = vec![pipe_path, p2];
    let mut out = args.common.out()?;

    let test = match pipeline.provenance() {
        Some(p) => split_raw(&d2, &p.split)?.1,
        None => d2.clone(),
    };
    let scored = pipeline.apply_corrected(&test)?;
    let evaluation = Evaluation {
        test_records: test.len(),
        auc_m1: auc(&scored.m1, test.target())?,
        auc_m2: auc(&pipeline.score_m2(&test)?, test.target())?,
        auc_combined: auc(&scored.combined, test.target())?,
    };
    out.write_json("evaluation.json", &evaluation)?;

    if let Some(spec) = &o.learning_curve {
        let ks = parse_counts(spec)?;
        let p1 = need(&o.regime1, "regime1")?;
        let prov = pipeline
            .provenance()
            .ok_or_else(|| anyhow!("the pipeline records no build configuration; cannot rebuild a learning curve"))?;
        let d1 = load_data(&p1, pipeline.discretizer())?;
        inputs.push(p1);
        let ctx = CorrectionContext::prepare(
            &d1,
            &d2,
            pipeline.m1(),
            pipeline.m2(),
            &prov.mining,
            &prov.calibration,
            &prov.data_config,
        )?;
        let curve = learning_curve(&ctx, &prov.calibration, &ks)?;
        out.write_with("learning_curve.csv", |b| {
            let mut w = csv::Writer::from_writer(b);
            for p in &curve {
                w.serialize(p)?;
            }
            w.flush().map_err(|e| prm_drift::Error::Io {
                path: "<learning_curve>".into(),
                source: e,
            })?;
            Ok(())
        })?;
    }

    let variable = o.band_variable.clone().unwrap_or_else(|| "cscore".into());
    let cuts = match &o.cuts {
        Some(c) => parse_cuts(c).map_err(|e| anyhow!(e))?,
        None => default_band_cuts(&d2, &variable, prm_drift::session::DEFAULT_BANDS)?,
    };
    let bands = band_report(&pipeline, &d2, &variable, &cuts)?;
    out.write_json("bands.json", &bands)?;
    out.write_with("bands.csv", |b| bands.to_csv(b))?;
    out.finish("evaluate", config_echo(&o)?, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------- session commands

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionOptions {
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Use the bundled demo pipeline instead of --pipeline.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bundled: Option<bool>,
    /// Data the pipeline is applied to.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

impl SessionOptions {
    fn open(&self) -> Result<(Session, Vec<PathBuf>)> {
        let data = need(&self.data, "data")?;
        match (&self.pipeline, self.bundled.unwrap_or(false)) {
            (Some(p), false) => Ok((Session::load(p, &data)?, vec![p.clone(), data])),
            (None, true) => {
                let pipeline = demo_pipeline();
                let raw = load_data(&data, pipeline.discretizer())?;
                Ok((Session::new(pipeline, raw)?, vec![data]))
            }
            _ => bail!("give exactly one of --pipeline and --bundled"),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterOptions {
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionOptions,
    #[arg(long)]
    pub min_support: Option<f64>,
    /// Largest combination size, 2 to 4.
    #[arg(long)]
    pub max_size: Option<usize>,
    /// Gap above which a refinement is suggested.
    #[arg(long)]
    pub gap_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: ClusterOptions,
}

fn cluster(args: &ClusterArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let (session, inputs) = o.session.open()?;
    let d = ClusterQuery::default();
    let q = ClusterQuery {
        min_support: o.min_support.unwrap_or(d.min_support),
        max_size: o.max_size.unwrap_or(d.max_size),
        gap_threshold: o.gap_threshold.unwrap_or(d.gap_threshold),
    };
    let clusters = session.clusters(&q)?;
    let mut out = args.common.out()?;
    out.write_json("clusters.json", &clusters)?;
    out.finish("cluster", config_echo(&o)?, &inputs)?;
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOptions {
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionOptions,
    /// Scenario document (JSON).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Crisis likelihood; overrides the document's value.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub variable: Option<String>,
    #[arg(long)]
    pub cuts: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: ScenarioOptions,
}

fn scenario(args: &ScenarioArgs) -> Result<()> {
    let o = resolve(&args.options, args.common.config.as_deref())?;
    let spec_path = need(&o.spec, "spec")?;
    let text = std::fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec = ScenarioSpec::from_json(&text)?;
    if let Some(q) = o.q {
        spec.crisis_likelihood = Some(q);
    }
    let (session, mut inputs) = o.session.open()?;
    inputs.push(spec_path);
    let cuts = o.cuts.as_deref().map(parse_cuts).transpose().map_err(|e| anyhow!(e))?;
    let report = session.scenario(&spec, o.variable.as_deref(), cuts.as_deref())?;
    let mut out = args.common.out()?;
    out.write_json("scenario.json", &report)?;
    out.write_with("scenario.csv", |b| report.to_csv(b))?;
    out.finish("scenario", config_echo(&o)?, &inputs)?;
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeOptions {
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionOptions,
    /// Address to listen on.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub options: ServeOptions,
}

fn serve(args: &ServeArgs) -> Result<()> {
    let o = resolve(&args.options, args.config.as_deref())?;
    let (session, _) = o.session.open()?;
    let bind = o.bind.unwrap_or_else(|| "127.0.0.1:8080".into());
    tokio::runtime::Runtime::new()?.block_on(crate::service::serve(session, &bind))
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Discretize(a) => discretize(a),
        Command::Mine(a) => mine(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Correct(a) => correct(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Cluster(a) => cluster(a),
        Command::Scenario(a) => scenario(a),
        Command::Serve(a) => serve(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_counts("1..4").unwrap(), [1, 2, 3, 4]);
        assert_eq!(parse_counts("1..=2").unwrap(), [1, 2]);
        assert_eq!(parse_counts("0, 3,5").unwrap(), [0, 3, 5]);
        assert!(parse_counts("4..1").is_err());
        assert!(parse_counts("x").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "regime1 = 10\nregime2 = 20\nseed = 3\n").unwrap();
        let flags = SynthOptions {
            seed: Some(9),
            ..Default::default()
        };
        let o = resolve(&flags, Some(&path)).unwrap();
        assert_eq!((o.regime1, o.regime2, o.seed), (Some(10), Some(20), Some(9)));
        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(resolve(&flags, Some(&path)).is_err());
    }
}
