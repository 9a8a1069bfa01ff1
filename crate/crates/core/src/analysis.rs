//! Evaluation and drift diagnostics: AUC, learning curves over the size of
//! the correction layer, band calibration tables, group default rates,
//! impact-sorted rule tables and frequent rule combinations.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitColumn;
use crate::calibrate::CalibrationConfig;
use crate::correction::{CorrectionContext, CorrectionPipeline};
use crate::data::{quantile_cuts, BinaryDataset, ColumnData, Predicate, RawDataset};
use crate::error::{Error, Result};
use crate::model::{sigmoid, RuleModel};

/// Area under the ROC curve from rank sums; ties count one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Structure(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain(format!("label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both classes among the labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of 1-based midranks of the positives, doubled to stay integral
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_mid = (start + 1 + end) as u128;
        let pos = order[start..end].iter().filter(|&&i| labels[i] == 1.0).count() as u128;
        twice_rank_sum += twice_mid * pos;
        start = end;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Requested number of rules.
    pub k: usize,
    pub auc_m1: f64,
    pub auc_m2: f64,
    pub auc_combined: f64,
}

/// AUC on the held-out regime-2 records for correction layers built from
/// each ranked prefix of `ks` rules.
pub fn learning_curve(
    context: &CorrectionContext,
    calib: &CalibrationConfig,
    ks: &[usize],
) -> Result<Vec<CurvePoint>> {
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("rule counts must be strictly ascending".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k > context.ranked.len()) {
        return Err(Error::Config(format!(
            "{k} rules requested but only {} candidates were mined",
            context.ranked.len()
        )));
    }
    let labels = context.test.target();
    let auc_m1 = auc(&context.m1_test, labels)?;
    let auc_m2 = auc(&context.m2_test, labels)?;
    ks.iter()
        .map(|&k| {
            let (layer, _) = context.layer(k, calib)?;
            let scored = context.corrected_test(&layer)?;
            Ok(CurvePoint {
                k,
                auc_m1,
                auc_m2,
                auc_combined: auc(&scored.combined, labels)?,
            })
        })
        .collect()
}

/// Mean probability and mean log-odds of one score over a band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean_probability: Option<f64>,
    pub mean_logodds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub band: String,
    pub count: usize,
    pub observed_rate: Option<f64>,
    /// One summary per score series, in the report's series order.
    pub scores: Vec<ScoreSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub variable: String,
    pub cuts: Vec<f64>,
    pub series: Vec<String>,
    /// Bands in order of the cuts, then the band of records missing the variable.
    pub bands: Vec<BandRow>,
}

fn fmt_cut(c: f64) -> String {
    format!("{c}")
}

/// Labels for the bands `(-inf,c1), [c1,c2), ..., [ck,inf)` plus missing.
pub fn band_labels(variable: &str, cuts: &[f64]) -> Vec<String> {
    let mut out = Vec::with_capacity(cuts.len() + 2);
    if cuts.is_empty() {
        out.push(format!("{variable}:all"));
    } else {
        out.push(format!("{variable}<{}", fmt_cut(cuts[0])));
        for w in cuts.windows(2) {
            out.push(format!("{variable} in [{},{})", fmt_cut(w[0]), fmt_cut(w[1])));
        }
        out.push(format!("{variable}>={}", fmt_cut(cuts[cuts.len() - 1])));
    }
    out.push(format!("{variable} missing"));
    out
}

pub fn validate_cuts(cuts: &[f64]) -> Result<()> {
    if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "band cuts must be finite and strictly increasing, got {cuts:?}"
        )));
    }
    Ok(())
}

/// Streaming per-band sums; memory is proportional to the number of bands.
#[derive(Debug, Clone)]
pub struct BandAccumulator {
    cuts: Vec<f64>,
    count: Vec<usize>,
    target: Vec<f64>,
    probability: Vec<Vec<f64>>,
    logodds: Vec<Vec<f64>>,
}

impl BandAccumulator {
    pub fn new(cuts: &[f64], series: usize) -> Result<Self> {
        validate_cuts(cuts)?;
        let bands = cuts.len() + 2;
        Ok(Self {
            cuts: cuts.to_vec(),
            count: vec![0; bands],
            target: vec![0.0; bands],
            probability: vec![vec![0.0; series]; bands],
            logodds: vec![vec![0.0; series]; bands],
        })
    }

    /// Band index of a value; the last band holds missing values.
    pub fn band_of(&self, value: Option<f64>) -> usize {
        match value {
            Some(v) if !v.is_nan() => self.cuts.partition_point(|&c| c <= v),
            _ => self.cuts.len() + 1,
        }
    }

    /// Adds a record given its band variable, target and per-series log-odds.
    pub fn add(&mut self, value: Option<f64>, target: f64, logodds: &[f64]) {
        let b = self.band_of(value);
        self.count[b] += 1;
        self.target[b] += target;
        for (s, &z) in logodds.iter().enumerate() {
            self.probability[b][s] += sigmoid(z);
            self.logodds[b][s] += z;
        }
    }

    pub fn finish(self, variable: &str, series: Vec<String>) -> BandReport {
        let labels = band_labels(variable, &self.cuts);
        let bands = labels
            .into_iter()
            .enumerate()
            .map(|(b, band)| {
                let n = self.count[b];
                let mean = |sum: f64| (n > 0).then(|| sum / n as f64);
                BandRow {
                    band,
                    count: n,
                    observed_rate: mean(self.target[b]),
                    scores: (0..series.len())
                        .map(|s| ScoreSummary {
                            mean_probability: mean(self.probability[b][s]),
                            mean_logodds: mean(self.logodds[b][s]),
                        })
                        .collect(),
                }
            })
            .collect();
        BandReport {
            variable: variable.into(),
            cuts: self.cuts,
            series,
            bands,
        }
    }
}

/// Values of a numeric raw variable.
pub fn numeric_column<'a>(data: &'a RawDataset, variable: &str) -> Result<&'a [Option<f64>]> {
    match data.column(variable).map(|c| &c.data) {
        Some(ColumnData::Numeric(v)) => Ok(v),
        Some(_) => Err(Error::Structure(format!("{variable} is not numeric"))),
        None => Err(Error::Structure(format!("no variable named {variable}"))),
    }
}

/// Band table for named log-odds series over `data`.
pub fn band_table(
    data: &RawDataset,
    variable: &str,
    cuts: &[f64],
    series: &[(&str, &[f64])],
) -> Result<BandReport> {
    let values = numeric_column(data, variable)?;
    if let Some((name, s)) = series.iter().find(|(_, s)| s.len() != data.len()) {
        return Err(Error::Structure(format!(
            "series {name} has {} values for {} records",
            s.len(),
            data.len()
        )));
    }
    let mut acc = BandAccumulator::new(cuts, series.len())?;
    let mut row = vec![0.0; series.len()];
    for (i, (&v, &y)) in values.iter().zip(data.target()).enumerate() {
        for (slot, (_, s)) in row.iter_mut().zip(series) {
            *slot = s[i];
        }
        acc.add(v, y, &row);
    }
    Ok(acc.finish(variable, series.iter().map(|(n, _)| n.to_string()).collect()))
}

/// Observed and predicted default rates per band for `m1`, `m2` and `m1 + C`.
pub fn band_report(
    pipeline: &CorrectionPipeline,
    data: &RawDataset,
    variable: &str,
    cuts: &[f64],
) -> Result<BandReport> {
    let corrected = pipeline.apply_corrected(data)?;
    let m2 = pipeline.score_m2(data)?;
    band_table(
        data,
        variable,
        cuts,
        &[("m1", &corrected.m1), ("m2", &m2), ("combined", &corrected.combined)],
    )
}

/// Equal-count band edges for a numeric variable.
pub fn default_band_cuts(data: &RawDataset, variable: &str, bands: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = numeric_column(data, variable)?.iter().flatten().copied().collect();
    Ok(quantile_cuts(&values, bands))
}

impl BandReport {
    /// Flat CSV: one row per band, probability and log-odds columns per series.
    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["band".to_string(), "count".into(), "observed_rate".into()];
        for s in &self.series {
            header.push(format!("{s}_probability"));
            header.push(format!("{s}_logodds"));
        }
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bands {
            let mut rec = vec![b.band.clone(), b.count.to_string(), opt(b.observed_rate)];
            for s in &b.scores {
                rec.push(opt(s.mean_probability));
                rec.push(opt(s.mean_logodds));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub dataset: String,
    pub count: usize,
    pub rate: Option<f64>,
}

/// Observed target rate of the records selected by `predicate`, per dataset.
pub fn group_rates(datasets: &[(&str, &RawDataset)], predicate: &Predicate) -> Vec<GroupRate> {
    datasets
        .iter()
        .map(|(name, data)| {
            let (count, sum) = (0..data.len())
                .filter(|&i| predicate.eval(&data.row(i)))
                .fold((0usize, 0.0), |(n, s), i| (n + 1, s + data.target()[i]));
            GroupRate {
                dataset: name.to_string(),
                count,
                rate: (count > 0).then(|| sum / count as f64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub id: String,
    pub definition: String,
    pub points: f64,
    pub coverage: f64,
    pub impact: f64,
}

/// Rules sorted by `|points| * coverage`, ties by higher coverage then id;
/// the intercept always comes last.
pub fn impact_table(model: &RuleModel, data: &BinaryDataset) -> Result<Vec<ImpactRow>> {
    let coverage = model.coverage(data)?;
    let points = model.points();
    let mut rows: Vec<(bool, ImpactRow)> = model
        .rules()
        .iter()
        .zip(points.into_iter().zip(coverage))
        .map(|(r, (p, c))| {
            (
                r.is_intercept(),
                ImpactRow {
                    id: r.id.clone(),
                    definition: r.label.clone(),
                    points: p,
                    coverage: c,
                    impact: p.abs() * c,
                },
            )
        })
        .collect();
    rows.sort_by(|(ia, a), (ib, b)| {
        ia.cmp(ib)
            .then(b.impact.total_cmp(&a.impact))
            .then(b.coverage.total_cmp(&a.coverage))
            .then(a.id.cmp(&b.id))
    });
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCombo {
    pub rules: Vec<String>,
    pub count: usize,
    pub support: f64,
    pub predicted_rate: f64,
    pub observed_rate: f64,
    pub gap: f64,
}

fn trigger_columns(model: &RuleModel, data: &BinaryDataset) -> Result<Vec<(usize, BitColumn)>> {
    if data.feature_names() != model.feature_names() {
        return Err(Error::Structure("dataset features differ from the model's".into()));
    }
    Ok(model
        .rules()
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_intercept())
        .map(|(j, r)| (j, BitColumn::from_fn(data.len(), |i| r.fires(data.record(i)))))
        .collect())
}

fn rates(column: &BitColumn, predicted: &[f64], target: &[f64]) -> (usize, f64, f64) {
    let (mut n, mut p, mut y) = (0usize, 0.0, 0.0);
    for i in column.ones_iter() {
        n += 1;
        p += predicted[i];
        y += target[i];
    }
    if n == 0 {
        (0, 0.0, 0.0)
    } else {
        (n, p / n as f64, y / n as f64)
    }
}

fn check_predicted(data: &BinaryDataset, predicted: &[f64]) -> Result<()> {
    if predicted.len() != data.len() {
        return Err(Error::Structure(format!(
            "{} predictions for {} records",
            predicted.len(),
            data.len()
        )));
    }
    Ok(())
}

/// All combinations of two to `max_size` non-intercept rules that trigger
/// together on at least `min_support` of the records, found levelwise.
/// `predicted` holds per-record probabilities used for the predicted rate.
pub fn frequent_rule_combos(
    model: &RuleModel,
    data: &BinaryDataset,
    predicted: &[f64],
    min_support: f64,
    max_size: usize,
) -> Result<Vec<RuleCombo>> {
    if !(2..=4).contains(&max_size) {
        return Err(Error::Config(format!("max_size must be 2 to 4, got {max_size}")));
    }
    if !(0.0..=1.0).contains(&min_support) {
        return Err(Error::Config(format!("min_support {min_support} is not in [0, 1]")));
    }
    check_predicted(data, predicted)?;
    let n = data.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let frequent = |c: usize| c > 0 && c as f64 / n as f64 >= min_support;
    let columns = trigger_columns(model, data)?;
    let mut level: Vec<(Vec<usize>, BitColumn)> = columns
        .iter()
        .enumerate()
        .filter(|(_, (_, col))| frequent(col.count()))
        .map(|(k, (_, col))| (vec![k], col.clone()))
        .collect();
    let mut out = Vec::new();
    for _size in 2..=max_size {
        let known: HashSet<&[usize]> = level.iter().map(|(s, _)| s.as_slice()).collect();
        let mut joins = Vec::new();
        for a in 0..level.len() {
            for b in a + 1..level.len() {
                let (sa, sb) = (&level[a].0, &level[b].0);
                if sa[..sa.len() - 1] != sb[..sb.len() - 1] {
                    // levels are sorted, so no later b shares a's prefix
                    break;
                }
                let mut set = sa.clone();
                set.push(*sb.last().unwrap());
                let closed = (0..set.len()).all(|drop| {
                    let sub: Vec<usize> =
                        set.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &v)| v).collect();
                    known.contains(sub.as_slice())
                });
                if closed {
                    joins.push((a, set));
                }
            }
        }
        let next: Vec<(Vec<usize>, BitColumn)> = joins
            .into_par_iter()
            .filter_map(|(a, set)| {
                let col = level[a].1.and(&columns[*set.last().unwrap()].1);
                frequent(col.count()).then_some((set, col))
            })
            .collect();
        for (set, col) in &next {
            let (count, p, y) = rates(col, predicted, data.target());
            out.push(RuleCombo {
                rules: set.iter().map(|&k| model.rules()[columns[k].0].id.clone()).collect(),
                count,
                support: count as f64 / n as f64,
                predicted_rate: p,
                observed_rate: y,
                gap: (p - y).abs(),
            });
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCluster {
    pub count: usize,
    pub predicted_rate: Option<f64>,
    pub observed_rate: Option<f64>,
    pub gap: Option<f64>,
}

impl SubCluster {
    fn of(column: &BitColumn, predicted: &[f64], target: &[f64]) -> Self {
        let (count, p, y) = rates(column, predicted, target);
        let some = |v: f64| (count > 0).then_some(v);
        Self {
            count,
            predicted_rate: some(p),
            observed_rate: some(y),
            gap: some((p - y).abs()),
        }
    }

    /// `count * (observed - predicted)^2`
    fn weighted_square(&self) -> f64 {
        match (self.observed_rate, self.predicted_rate) {
            (Some(y), Some(p)) => self.count as f64 * (y - p) * (y - p),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub rule: String,
    /// Records of the cluster that also trigger `rule`.
    pub with_rule: SubCluster,
    pub without_rule: SubCluster,
    /// How much the mean squared gap shrinks when each sub-cluster is
    /// judged on its own.
    pub gap_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub rules: Vec<String>,
    pub count: usize,
    pub predicted_rate: Option<f64>,
    pub observed_rate: Option<f64>,
    pub gap: Option<f64>,
    pub refinement: Option<Refinement>,
}

/// Compares predicted and observed rates on the records triggering all
/// `rules`. When the gap exceeds `threshold`, proposes the additional rule
/// whose split of the cluster into records with and without it explains the
/// most of the miscalibration: the largest drop from the squared cluster gap
/// to the count-weighted mean of the squared sub-cluster gaps.
pub fn cluster_quality(
    rules: &[String],
    model: &RuleModel,
    data: &BinaryDataset,
    predicted: &[f64],
    threshold: f64,
) -> Result<ClusterQuality> {
    check_predicted(data, predicted)?;
    let columns = trigger_columns(model, data)?;
    let mut members = BitColumn::ones(data.len());
    let mut inside = HashSet::new();
    for id in rules {
        let k = columns
            .iter()
            .position(|(j, _)| model.rules()[*j].id == *id)
            .ok_or_else(|| Error::Structure(format!("no non-intercept rule {id}")))?;
        members = members.and(&columns[k].1);
        inside.insert(k);
    }
    let whole = SubCluster::of(&members, predicted, data.target());
    let mut refinement = None;
    if whole.gap.is_some_and(|g| g > threshold) {
        let total = whole.count as f64;
        let current = whole.weighted_square() / total;
        for (k, (j, col)) in columns.iter().enumerate() {
            if inside.contains(&k) {
                continue;
            }
            let with_col = members.and(col);
            let without_col = BitColumn::from_fn(data.len(), |i| members.get(i) && !col.get(i));
            let with_rule = SubCluster::of(&with_col, predicted, data.target());
            let without_rule = SubCluster::of(&without_col, predicted, data.target());
            let split = (with_rule.weighted_square() + without_rule.weighted_square()) / total;
            let gap_reduction = split - current;
            let better = gap_reduction > 1e-12
                && refinement
                    .as_ref()
                    .is_none_or(|r: &Refinement| gap_reduction > r.gap_reduction);
            if better {
                refinement = Some(Refinement {
                    rule: model.rules()[*j].id.clone(),
                    with_rule,
                    without_rule,
                    gap_reduction,
                });
            }
        }
    }
    Ok(ClusterQuality {
        rules: rules.to_vec(),
        count: whole.count,
        predicted_rate: whole.predicted_rate,
        observed_rate: whole.observed_rate,
        gap: whole.gap,
        refinement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Literal, Mode, Rule};

    fn brute_auc(s: &[f64], y: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(auc(&[3.0; 5], &[0.0, 1.0, 0.0, 1.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(auc(&[1.0, 2.0], &[1.0, 1.0]), Err(Error::UndefinedMetric(_))));
        assert!(auc(&[1.0], &[0.5]).is_err());
        let s = [0.3, 0.3, 0.1, 0.7, 0.3, 0.9];
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        assert!((auc(&s, &y).unwrap() - brute_auc(&s, &y)).abs() < 1e-15);
    }

    fn one_rule_data() -> (RuleModel, BinaryDataset) {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let rules = vec![
            Rule::from_points("R-01", "a", vec![Literal::positive(0)], 2.0, 1.0).unwrap(),
            Rule::from_points("R-02", "b", vec![Literal::positive(1)], -2.0, 1.0).unwrap(),
            Rule::from_points("R-03", "c", vec![Literal::positive(2)], 0.5, 1.0).unwrap(),
            Rule::from_points("R-04", "-", vec![], 1.0, 1.0).unwrap(),
        ];
        let model = RuleModel::new(rules, 1.0, Mode::Classifier, names.clone()).unwrap();
        let rows: Vec<Vec<bool>> = (0..10).map(|i| vec![i < 5, i == 0, false]).collect();
        let data = BinaryDataset::from_rows(&rows, names, vec![0.0; 10]).unwrap();
        (model, data)
    }

    #[test]
    fn impact_ordering() {
        let (model, data) = one_rule_data();
        let t = impact_table(&model, &data).unwrap();
        let ids: Vec<&str> = t.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["R-01", "R-02", "R-03", "R-04"]);
        assert!((t[0].impact - 1.0).abs() < 1e-12);
        assert!((t[1].impact - 0.2).abs() < 1e-12);
        assert_eq!(t[2].impact, 0.0);
        assert_eq!(t[3].coverage, 1.0);
    }

    #[test]
    fn band_rows_cover_everything() {
        let col = ColumnData::Numeric(vec![Some(1.0), Some(5.0), None, Some(10.0), Some(7.0)]);
        let data = RawDataset::new(
            vec![crate::data::Column { name: "x".into(), data: col }],
            "y",
            vec![1.0, 0.0, 1.0, 0.0, 1.0],
            (1..=5).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        let s = vec![0.0; 5];
        let r = band_table(&data, "x", &[5.0, 8.0, 20.0], &[("m", &s)]).unwrap();
        let labels: Vec<&str> = r.bands.iter().map(|b| b.band.as_str()).collect();
        assert_eq!(labels, ["x<5", "x in [5,8)", "x in [8,20)", "x>=20", "x missing"]);
        let counts: Vec<usize> = r.bands.iter().map(|b| b.count).collect();
        assert_eq!(counts, [1, 2, 1, 0, 1]);
        assert_eq!(r.bands[3].observed_rate, None);
        assert_eq!(r.bands[1].observed_rate, Some(0.5));
        assert_eq!(r.bands[0].scores[0].mean_probability, Some(0.5));
        assert!(band_table(&data, "x", &[2.0, 2.0], &[("m", &s)]).is_err());
        let all = band_table(&data, "x", &[], &[("m", &s)]).unwrap();
        assert_eq!(all.bands[0].observed_rate, Some(2.0 / 4.0));
    }

    #[test]
    fn disjoint_rules_have_no_pair() {
        let names = vec!["a".to_string(), "b".to_string()];
        let rules = vec![
            Rule::new("R-01", "a", vec![Literal::positive(0)], 0.3).unwrap(),
            Rule::new("R-02", "b", vec![Literal::positive(1)], 0.3).unwrap(),
            Rule::intercept("R-03", 0.5).unwrap(),
        ];
        let model = RuleModel::new(rules, 1.0, Mode::Classifier, names.clone()).unwrap();
        let rows: Vec<Vec<bool>> = (0..6).map(|i| vec![i % 2 == 0, i % 2 == 1]).collect();
        let data = BinaryDataset::from_rows(&rows, names, vec![0.0; 6]).unwrap();
        let combos = frequent_rule_combos(&model, &data, &[0.1; 6], 0.0, 3).unwrap();
        assert!(combos.is_empty());
        assert!(frequent_rule_combos(&model, &data, &[0.1; 6], 0.0, 5).is_err());
    }

    #[test]
    fn calibrated_cluster_needs_no_refinement() {
        let (model, data) = one_rule_data();
        let q = cluster_quality(&["R-01".into(), "R-02".into()], &model, &data, &[0.0; 10], 0.01).unwrap();
        assert_eq!(q.count, 1);
        assert_eq!(q.gap, Some(0.0));
        assert!(q.refinement.is_none());
    }
}
