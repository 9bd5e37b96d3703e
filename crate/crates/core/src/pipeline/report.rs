use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::augment::AugmentMode;
use crate::controllability::Engine;
use crate::error::{Error, Result};
use crate::metrics::{AggregateReport, MetricTriple, Summary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub num_nodes: usize,
    /// Directed edge count after symmetrization.
    pub num_edges: usize,
    pub feature_dim: usize,
    pub num_anomalies: usize,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllabilitySummary {
    pub spectral_radius: f64,
    pub steps_used: usize,
    pub horizon: f64,
    pub engine: Engine,
    pub min_score: f64,
    pub max_score: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: MetricTriple,
    pub final_loss: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub test_anomalies: usize,
    /// SHA-256 of the train mask; equal across arms for the same seed.
    pub split_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub label: String,
    pub mode: AugmentMode,
    pub per_seed: Vec<SeedResult>,
    /// Absent when no seed finished.
    pub aggregate: Option<AggregateReport>,
}

impl ArmReport {
    pub(crate) fn new(label: String, mode: AugmentMode, mut per_seed: Vec<SeedResult>) -> Result<Self> {
        per_seed.sort_by_key(|r| r.seed);
        let triples: Vec<_> = per_seed.iter().map(|r| r.metrics).collect();
        let aggregate = if triples.is_empty() {
            None
        } else {
            Some(crate::metrics::aggregate(&triples)?)
        };
        Ok(ArmReport {
            label,
            mode,
            per_seed,
            aggregate,
        })
    }

    pub fn mean_auprc(&self) -> Option<f64> {
        self.aggregate.as_ref().map(|a| a.auprc.mean)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_s: f64,
    pub controllability_s: f64,
    pub augment_s: f64,
    pub train_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed { stage: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub status: RunStatus,
    pub dataset: Option<DatasetSummary>,
    pub controllability: Option<ControllabilitySummary>,
    /// Unaugmented arm: symmetrized graph, unit weights, no attributes.
    pub baseline: Option<ArmReport>,
    /// One augmented arm per variant (several under a bin sweep).
    pub augmented: Vec<ArmReport>,
    /// Bin count of the variant with the highest mean AUPRC.
    pub best_bins: Option<usize>,
    pub timings: Timings,
}

impl EvaluationReport {
    pub fn best_variant(&self) -> Option<&ArmReport> {
        self.augmented
            .iter()
            .filter(|a| a.mean_auprc().is_some())
            .fold(None, |best: Option<&ArmReport>, a| match best {
                Some(b) if b.mean_auprc() >= a.mean_auprc() => Some(b),
                _ => Some(a),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

/// One per-seed row of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub arm: String,
    pub seed: u64,
    pub auroc: f64,
    pub auprc: f64,
    pub rec_at_k: f64,
    pub final_loss: f64,
    pub test_size: usize,
    pub test_anomalies: usize,
}

fn arms(report: &EvaluationReport) -> impl Iterator<Item = &ArmReport> {
    report.baseline.iter().chain(&report.augmented)
}

pub fn csv_rows(report: &EvaluationReport) -> Vec<CsvRow> {
    arms(report)
        .flat_map(|arm| {
            arm.per_seed.iter().map(move |r| CsvRow {
                arm: arm.label.clone(),
                seed: r.seed,
                auroc: r.metrics.auroc,
                auprc: r.metrics.auprc,
                rec_at_k: r.metrics.rec_at_k,
                final_loss: r.final_loss,
                test_size: r.test_size,
                test_anomalies: r.test_anomalies,
            })
        })
        .collect()
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    if report.baseline.is_none() && report.augmented.is_empty() {
        return Err(Error::Precondition("report has no results".into()));
    }
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in csv_rows(report) {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => Ok(markdown(report)),
    }
}

fn cell(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!("{:.4} ± {:.4}", s.mean, s.sd),
        None => "n/a".into(),
    }
}

fn markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let cfg = &report.config;
    let _ = writeln!(out, "# {}\n", cfg.name);
    let _ = writeln!(out, "Config hash: `{}`\n", report.config_hash);
    if let RunStatus::Failed { stage, error } = &report.status {
        let _ = writeln!(out, "**Incomplete run**: {stage} stage failed: {error}\n");
    }
    if let Some(d) = &report.dataset {
        let _ = writeln!(
            out,
            "Nodes: {}, edges: {}, features: {}, anomalies: {} (prevalence {:.4})\n",
            d.num_nodes, d.num_edges, d.feature_dim, d.num_anomalies, d.prevalence
        );
    }
    let base = report.baseline.as_ref().and_then(|b| b.aggregate.as_ref());
    let model = cfg.model.conv_type.name();
    out.push_str("| Model | Variant | AUROC Ours | AUROC Baseline | AUPRC Ours | AUPRC Baseline | Rec@K Ours | Rec@K Baseline |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for arm in &report.augmented {
        let ours = arm.aggregate.as_ref();
        let best = report.augmented.len() > 1 && arm.mode.bins().is_some() && arm.mode.bins() == report.best_bins;
        let _ = writeln!(
            out,
            "| {model} | {}{} | {} | {} | {} | {} | {} | {} |",
            arm.label,
            if best { " (best)" } else { "" },
            cell(ours.map(|a| a.auroc)),
            cell(base.map(|a| a.auroc)),
            cell(ours.map(|a| a.auprc)),
            cell(base.map(|a| a.auprc)),
            cell(ours.map(|a| a.rec_at_k)),
            cell(base.map(|a| a.rec_at_k)),
        );
    }
    out.push_str("\n## Per seed\n\n| Arm | Seed | AUROC | AUPRC | Rec@K | Final loss |\n|---|---|---|---|---|---|\n");
    for arm in arms(report) {
        for r in &arm.per_seed {
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
                arm.label, r.seed, r.metrics.auroc, r.metrics.auprc, r.metrics.rec_at_k, r.final_loss
            );
        }
    }
    out
}

/// Writes `report.<ext>` into `dir` and returns its path.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    let text = render_report(report, format)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("report.{}", format.extension()));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
