use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{DatasetConfig, ExperimentConfig};
use super::report::{
    emit_report, ArmReport, ControllabilitySummary, DatasetSummary, EvaluationReport, ReportFormat, RunStatus,
    SeedResult, Timings,
};
use crate::augment::{augment, AugmentMode};
use crate::controllability::{average_controllability, ControllabilityResult};
use crate::error::{Error, Result};
use crate::gnn::{anomaly_scores, forward, split_nodes, train, ModelConfig, PreparedGraph};
use crate::graph::{load_graph_with, Graph, GraphContainer, LoadOptions};
use crate::inject::{generate_clean_graph, inject, InjectionManifest};
use crate::metrics::{evaluate, RankedScores};

pub fn load_dataset(cfg: &DatasetConfig) -> Result<Graph> {
    match cfg {
        DatasetConfig::Synthetic(spec) => generate_clean_graph(spec),
        DatasetConfig::Files {
            edges,
            features,
            labels,
            directed,
            remap_ids,
        } => {
            let opts = LoadOptions {
                directed: *directed,
                remap_ids: *remap_ids,
                ..Default::default()
            };
            load_graph_with(edges, features, labels, opts).map(|(g, _)| g)
        }
        DatasetConfig::Container { path } => GraphContainer::read(path)?.into_graph(),
    }
}

/// The graph after loading, injection and symmetrization, with its
/// controllability scores. Reusable across model configs that share the
/// dataset, injection and controllability sections.
#[derive(Debug, Clone)]
pub struct StagedData {
    pub graph: Graph,
    pub manifest: InjectionManifest,
    pub controllability: Option<ControllabilityResult>,
    pub load_s: f64,
    pub controllability_s: f64,
    data_hash: String,
}

impl StagedData {
    pub fn summary(&self) -> DatasetSummary {
        let g = &self.graph;
        DatasetSummary {
            num_nodes: g.num_nodes(),
            num_edges: g.num_edges(),
            feature_dim: g.feature_dim(),
            num_anomalies: g.num_anomalies(),
            prevalence: g.num_anomalies() as f64 / g.num_nodes() as f64,
        }
    }

    fn controllability_summary(&self, step_size: f64) -> Option<ControllabilitySummary> {
        let c = self.controllability.as_ref()?;
        let s = &c.scores;
        Some(ControllabilitySummary {
            spectral_radius: c.spectral_radius,
            steps_used: c.steps_used,
            horizon: c.horizon(step_size),
            engine: c.engine,
            min_score: s.iter().copied().fold(f64::INFINITY, f64::min),
            max_score: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_score: s.iter().sum::<f64>() / s.len() as f64,
        })
    }
}

fn needs_scores(cfg: &ExperimentConfig) -> Result<bool> {
    Ok(cfg.augmentation.variants()?.iter().any(|m| *m != AugmentMode::None))
}

/// Load, inject, symmetrize and score. Errors carry their stage.
pub fn stage_data(cfg: &ExperimentConfig) -> Result<StagedData> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let t = Instant::now();
    let g = load_dataset(&cfg.dataset).map_err(|e| e.in_stage("load"))?;
    let (g, manifest) = inject(&g, cfg.injection.structural.as_ref(), cfg.injection.contextual.as_ref())
        .map_err(|e| e.in_stage("inject"))?;
    let graph = g.symmetrize();
    let load_s = t.elapsed().as_secs_f64();
    info!(
        "graph ready: {} nodes, {} edges, {} anomalies",
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_anomalies()
    );
    let t = Instant::now();
    let controllability = if needs_scores(cfg)? {
        let r = average_controllability(&graph, &cfg.controllability).map_err(|e| e.in_stage("controllability"))?;
        info!("controllability: {} steps, spectral radius {:.4}", r.steps_used, r.spectral_radius);
        Some(r)
    } else {
        None
    };
    Ok(StagedData {
        graph,
        manifest,
        controllability,
        load_s,
        controllability_s: t.elapsed().as_secs_f64(),
        data_hash: cfg.data_hash(),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    let t = Instant::now();
    let staged = match stage_data(cfg) {
        Ok(s) => s,
        Err(e) => {
            let mut report = empty_report(cfg);
            report.timings.total_s = t.elapsed().as_secs_f64();
            return Err(fail(report, e));
        }
    };
    run_experiment_with(cfg, &staged)
}

fn empty_report(cfg: &ExperimentConfig) -> EvaluationReport {
    EvaluationReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        status: RunStatus::Complete,
        dataset: None,
        controllability: None,
        baseline: None,
        augmented: Vec::new(),
        best_bins: None,
        timings: Timings::default(),
    }
}

/// Records the failure in the report, flushes it and hands the error back.
fn fail(mut report: EvaluationReport, err: Error) -> Error {
    report.status = RunStatus::Failed {
        stage: err.stage().unwrap_or("pipeline").to_string(),
        error: err.to_string(),
    };
    if let Some(dir) = &report.config.output_dir {
        if let Err(e) = flush_partial(&report, dir) {
            warn!("could not write partial report: {e}");
        }
    }
    err
}

fn flush_partial(report: &EvaluationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.partial.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&path, e))
}

fn mask_hash(mask: &[bool]) -> String {
    let bytes: Vec<u8> = mask.iter().map(|&m| u8::from(m)).collect();
    hex::encode(Sha256::digest(&bytes))
}

struct Arm {
    label: String,
    mode: AugmentMode,
    model: ModelConfig,
    graph: PreparedGraph,
}

/// Trains and evaluates both arms on already staged data.
pub fn run_experiment_with(cfg: &ExperimentConfig, staged: &StagedData) -> Result<EvaluationReport> {
    let t0 = Instant::now();
    let mut report = empty_report(cfg);
    if let Err(e) = cfg.validate() {
        return Err(fail(report, e.in_stage("config")));
    }
    if staged.data_hash != cfg.data_hash() {
        let e = Error::Precondition("staged data was built from a different dataset, injection or controllability config".into());
        return Err(fail(report, e.in_stage("config")));
    }
    report.dataset = Some(staged.summary());
    report.controllability = staged.controllability_summary(cfg.controllability.step_size);
    report.timings.load_s = staged.load_s;
    report.timings.controllability_s = staged.controllability_s;

    let t = Instant::now();
    let arms = match build_arms(cfg, staged) {
        Ok(a) => a,
        Err(e) => return Err(fail(report, e.in_stage("augment"))),
    };
    report.timings.augment_s = t.elapsed().as_secs_f64();

    let labels = staged.graph.labels();
    let seeds = &cfg.training.seeds;
    let masks: Vec<Vec<bool>> = seeds
        .iter()
        .map(|&s| split_nodes(labels, &cfg.training.split, s))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..arms.len())
        .flat_map(|a| (0..seeds.len()).map(move |s| (a, s)))
        .collect();
    let run_job = |&(a, s): &(usize, usize)| -> Result<SeedResult> {
        let arm = &arms[a];
        let train_mask = &masks[s];
        let out = train(&arm.graph, labels, train_mask, &arm.model, &cfg.training, seeds[s])
            .map_err(|e| e.in_stage("train"))?;
        let scores = forward(&out.state, &arm.graph)
            .map(|l| anomaly_scores(&l))
            .map_err(|e| e.in_stage("train"))?;
        let test_mask: Vec<bool> = train_mask.iter().map(|&m| !m).collect();
        let ranked = RankedScores::new(scores, labels.to_vec(), test_mask).map_err(|e| e.in_stage("evaluate"))?;
        let metrics = evaluate(&ranked).map_err(|e| e.in_stage("evaluate"))?;
        info!(
            "{} seed {}: AUROC {:.4} AUPRC {:.4} Rec@K {:.4}",
            arm.label, seeds[s], metrics.auroc, metrics.auprc, metrics.rec_at_k
        );
        Ok(SeedResult {
            seed: seeds[s],
            metrics,
            final_loss: *out.loss_trace.last().expect("at least one epoch"),
            train_size: train_mask.iter().filter(|&&m| m).count(),
            test_size: ranked.masked_len(),
            test_anomalies: ranked.positives(),
            split_hash: mask_hash(train_mask),
        })
    };
    let t = Instant::now();
    let results: Vec<Result<SeedResult>> = match cfg.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| jobs.par_iter().map(run_job).collect()),
            Err(e) => return Err(fail(report, Error::Config(e.to_string()).in_stage("train"))),
        },
        None => jobs.par_iter().map(run_job).collect(),
    };
    report.timings.train_s = t.elapsed().as_secs_f64();

    let mut per_arm: Vec<Vec<SeedResult>> = vec![Vec::new(); arms.len()];
    let mut first_err = None;
    for ((a, _), r) in jobs.iter().zip(results) {
        match r {
            Ok(r) => per_arm[*a].push(r),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut built = Vec::new();
    for (arm, rows) in arms.iter().zip(per_arm) {
        match ArmReport::new(arm.label.clone(), arm.mode, rows) {
            Ok(r) => built.push(r),
            Err(e) => {
                first_err.get_or_insert(e.in_stage("evaluate"));
            }
        }
    }
    let mut built = built.into_iter();
    report.baseline = built.next();
    report.augmented = built.collect();
    report.best_bins = report.best_variant().and_then(|a| a.mode.bins());
    report.timings.total_s = t0.elapsed().as_secs_f64() + staged.load_s + staged.controllability_s;
    if let Some(e) = first_err {
        return Err(fail(report, e));
    }
    if let Some(dir) = &cfg.output_dir {
        for f in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
            emit_report(&report, f, dir).map_err(|e| e.in_stage("report"))?;
        }
    }
    Ok(report)
}

fn build_arms(cfg: &ExperimentConfig, staged: &StagedData) -> Result<Vec<Arm>> {
    let variants = cfg.augmentation.variants()?;
    let base_model = cfg.model_for(variants[0]);
    let mut arms = vec![Arm {
        label: "baseline".into(),
        mode: AugmentMode::None,
        graph: PreparedGraph::baseline(&staged.graph, &base_model)?,
        model: base_model,
    }];
    for mode in variants {
        let model = cfg.model_for(mode);
        let graph = match mode {
            AugmentMode::None => PreparedGraph::baseline(&staged.graph, &model)?,
            _ => {
                let scores = &staged
                    .controllability
                    .as_ref()
                    .ok_or_else(|| Error::Precondition("staged data has no controllability scores".into()))?
                    .scores;
                PreparedGraph::new(&augment(&staged.graph, scores, mode)?, &model)?
            }
        };
        let label = match mode {
            AugmentMode::None => "none".to_string(),
            AugmentMode::Weight => "weight".to_string(),
            AugmentMode::Attr { bins } => format!("attr k={bins}"),
            AugmentMode::Both { bins } => format!("both k={bins}"),
        };
        arms.push(Arm {
            label,
            mode,
            model,
            graph,
        });
    }
    Ok(arms)
}
