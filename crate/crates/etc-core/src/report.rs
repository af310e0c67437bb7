//! Experiment reports: per-run records, sweep tables, per-sample
//! predictions, and emission as JSON plus a flat metrics CSV and
//! plain-text plot data for the layer and lambda sweep curves.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;

/// Which heads participate in classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Probe-directed routing between both heads.
    Full,
    /// Everything through the source encoder and head.
    OnlySourceHead,
    /// Everything through the target encoder and head.
    OnlyTargetHead,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::OnlySourceHead, Ablation::OnlyTargetHead];

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::OnlySourceHead => "only_source_head",
            Ablation::OnlyTargetHead => "only_target_head",
        }
    }

    pub fn parse(s: &str) -> Result<Ablation> {
        match s {
            "full" => Ok(Ablation::Full),
            "only_source_head" => Ok(Ablation::OnlySourceHead),
            "only_target_head" => Ok(Ablation::OnlyTargetHead),
            other => Err(Error::InvalidParameter(format!(
                "ablation `{other}`: expected full, only_source_head, or only_target_head"
            ))),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Validation,
    Test,
}

impl EvalSplit {
    pub fn name(&self) -> &'static str {
        match self {
            EvalSplit::Validation => "validation",
            EvalSplit::Test => "test",
        }
    }
}

/// One evaluated cell: a seed, an injection layer, band widths, an
/// ablation mode, and the metrics it scored on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub layer_index: usize,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub ablation: Ablation,
    pub split: EvalSplit,
    pub metrics: MetricsRecord,
}

/// One mixed-set sample's full-mode outcome, kept so report metrics can
/// be recomputed independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub index: usize,
    pub true_label: usize,
    pub predicted: usize,
    pub origin: Domain,
    pub branch: Domain,
    pub tie_broken: bool,
    pub m_source: f64,
    pub m_target: f64,
}

/// Mean validation macro-F1 of one (layer, lambda) sweep cell across
/// seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub layer_index: usize,
    pub lambda: f64,
    pub mean_val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSelection {
    pub layer_index: usize,
    pub lambda: f64,
    pub mean_val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
    pub sweep: Vec<SweepCell>,
    pub best: Option<BestSelection>,
    pub samples: Vec<SampleRecord>,
}

const METRICS_HEADER: &[&str] = &[
    "seed",
    "layer_index",
    "lambda_s",
    "lambda_t",
    "ablation",
    "split",
    "n",
    "accuracy",
    "macro_f1",
    "routing_accuracy",
    "source_only",
    "target_only",
    "both",
    "neither",
    "conf_source_source",
    "conf_source_target",
    "conf_target_source",
    "conf_target_target",
];

fn write_metrics_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::CsvFormat {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::CsvFormat {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    w.write_record(METRICS_HEADER).map_err(fail)?;
    for r in &report.runs {
        let m = &r.metrics;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mem = |f: fn(&crate::metrics::MembershipCounts) -> usize| {
            m.membership.as_ref().map(|h| f(h).to_string()).unwrap_or_default()
        };
        let conf = |o: Domain, b: Domain| {
            m.confusion.as_ref().map(|c| c.get(o, b).to_string()).unwrap_or_default()
        };
        w.write_record([
            r.seed.to_string(),
            r.layer_index.to_string(),
            r.lambda_s.to_string(),
            r.lambda_t.to_string(),
            r.ablation.to_string(),
            r.split.name().to_string(),
            m.n.to_string(),
            m.accuracy.to_string(),
            m.macro_f1.to_string(),
            opt(m.routing_accuracy),
            mem(|h| h.source_only),
            mem(|h| h.target_only),
            mem(|h| h.both),
            mem(|h| h.neither),
            conf(Domain::Source, Domain::Source),
            conf(Domain::Source, Domain::Target),
            conf(Domain::Target, Domain::Source),
            conf(Domain::Target, Domain::Target),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `x y` rows for the layer-sweep curve: each layer's best mean
/// validation macro-F1 over the lambda grid.
fn layer_curve(report: &ExperimentReport) -> Vec<(usize, f64)> {
    let mut layers: Vec<usize> = report.sweep.iter().map(|c| c.layer_index).collect();
    layers.sort_unstable();
    layers.dedup();
    layers
        .into_iter()
        .map(|l| {
            let best = report
                .sweep
                .iter()
                .filter(|c| c.layer_index == l)
                .map(|c| c.mean_val_macro_f1)
                .fold(f64::NEG_INFINITY, f64::max);
            (l, best)
        })
        .collect()
}

/// `x y` rows for the lambda-sweep curve at the winning layer.
fn lambda_curve(report: &ExperimentReport) -> Vec<(f64, f64)> {
    let Some(best) = &report.best else {
        return Vec::new();
    };
    let mut rows: Vec<(f64, f64)> = report
        .sweep
        .iter()
        .filter(|c| c.layer_index == best.layer_index)
        .map(|c| (c.lambda, c.mean_val_macro_f1))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows
}

fn write_dat<X: std::fmt::Display>(
    path: &Path,
    comment: &str,
    rows: &[(X, f64)],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# {comment}\n"));
    for (x, y) in rows {
        out.push_str(&format!("{x} {y}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `metrics.csv`, and `plots/{layer_sweep,
/// lambda_sweep}.dat` into `dir`, creating it as needed.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;

    let json_path = dir.join("report.json");
    let env = serde_json::json!({
        "format": "etc-report",
        "version": crate::persist::FORMAT_VERSION,
        "payload": report,
    });
    let mut file = fs::File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let text = serde_json::to_string_pretty(&env)
        .map_err(|e| Error::Checkpoint(format!("{}: serialize: {e}", json_path.display())))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(&json_path, e))?;

    write_metrics_csv(report, &dir.join("metrics.csv"))?;
    write_dat(
        &plots.join("layer_sweep.dat"),
        "layer_index  mean_validation_macro_f1 (best lambda)",
        &layer_curve(report),
    )?;
    write_dat(
        &plots.join("lambda_sweep.dat"),
        "lambda  mean_validation_macro_f1 (winning layer)",
        &lambda_curve(report),
    )?;
    Ok(())
}

/// Parses a `report.json` written by [`emit_report`].
pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    #[derive(Deserialize)]
    struct Envelope {
        format: String,
        version: u32,
        payload: ExperimentReport,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: parse: {e}", path.display())))?;
    if env.format != "etc-report" {
        return Err(Error::Checkpoint(format!(
            "{}: format \"{}\", expected \"etc-report\"",
            path.display(),
            env.format
        )));
    }
    if env.version > crate::persist::FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {} is newer than supported {}",
            path.display(),
            env.version,
            crate::persist::FORMAT_VERSION
        )));
    }
    Ok(env.payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MembershipCounts, RoutingConfusion};

    fn sample_metrics(acc: f64) -> MetricsRecord {
        MetricsRecord {
            n: 10,
            accuracy: acc,
            macro_f1: acc * 0.9,
            routing_accuracy: Some(0.8),
            confusion: Some(RoutingConfusion { counts: [[4, 1], [1, 4]] }),
            membership: Some(MembershipCounts {
                source_only: 4,
                target_only: 4,
                both: 1,
                neither: 1,
            }),
        }
    }

    fn sample_report() -> ExperimentReport {
        let run = |seed, layer, ablation, split, acc| RunRecord {
            seed,
            layer_index: layer,
            lambda_s: 2.0,
            lambda_t: 2.0,
            ablation,
            split,
            metrics: sample_metrics(acc),
        };
        ExperimentReport {
            runs: vec![
                run(0, 1, Ablation::Full, EvalSplit::Test, 0.91),
                run(0, 1, Ablation::OnlySourceHead, EvalSplit::Test, 0.55),
                run(0, 1, Ablation::OnlyTargetHead, EvalSplit::Test, 0.62),
                run(1, 1, Ablation::Full, EvalSplit::Test, 0.89),
            ],
            sweep: vec![
                SweepCell { layer_index: 1, lambda: 1.0, mean_val_macro_f1: 0.71 },
                SweepCell { layer_index: 1, lambda: 2.0, mean_val_macro_f1: 0.83 },
                SweepCell { layer_index: 2, lambda: 1.0, mean_val_macro_f1: 0.64 },
                SweepCell { layer_index: 2, lambda: 2.0, mean_val_macro_f1: 0.69 },
            ],
            best: Some(BestSelection { layer_index: 1, lambda: 2.0, mean_val_macro_f1: 0.83 }),
            samples: vec![SampleRecord {
                seed: 0,
                index: 0,
                true_label: 1,
                predicted: 1,
                origin: Domain::Source,
                branch: Domain::Source,
                tie_broken: false,
                m_source: 3.25,
                m_target: 11.5,
            }],
        }
    }

    #[test]
    fn report_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        emit_report(&report, dir.path()).unwrap();
        let loaded = load_report(&dir.path().join("report.json")).unwrap();
        assert_eq!(loaded, report);
    }

    #[test]
    fn empty_report_emits_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&ExperimentReport::default(), dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("seed,layer_index"));
        let dat = std::fs::read_to_string(dir.path().join("plots/layer_sweep.dat")).unwrap();
        assert_eq!(dat.lines().count(), 1);
        assert!(dat.starts_with('#'));
        assert_eq!(load_report(&dir.path().join("report.json")).unwrap(), ExperimentReport::default());
    }

    #[test]
    fn csv_has_one_row_per_run() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        emit_report(&report, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + report.runs.len());
        let first_data = csv.lines().nth(1).unwrap();
        assert!(first_data.contains("full"), "{first_data}");
        assert!(first_data.contains("0.91"), "{first_data}");
    }

    #[test]
    fn plot_files_carry_sweep_curves() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&sample_report(), dir.path()).unwrap();
        let layer = std::fs::read_to_string(dir.path().join("plots/layer_sweep.dat")).unwrap();
        // Best lambda per layer: layer 1 → 0.83, layer 2 → 0.69.
        assert!(layer.contains("1 0.83"), "{layer}");
        assert!(layer.contains("2 0.69"), "{layer}");
        let lambda = std::fs::read_to_string(dir.path().join("plots/lambda_sweep.dat")).unwrap();
        // Lambda curve at winning layer 1 only.
        assert!(lambda.contains("1 0.71"), "{lambda}");
        assert!(lambda.contains("2 0.83"), "{lambda}");
        assert!(!lambda.contains("0.64"), "{lambda}");
    }

    #[test]
    fn emission_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let report = sample_report();
        emit_report(&report, a.path()).unwrap();
        emit_report(&report, b.path()).unwrap();
        for name in ["report.json", "metrics.csv", "plots/layer_sweep.dat", "plots/lambda_sweep.dat"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name} differs");
        }
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(Ablation::parse(a.name()).unwrap(), a);
        }
        assert!(Ablation::parse("everything").is_err());
    }
}
