//! Config-driven experiment: load or generate a graph, plant anomalies,
//! score controllability, augment, then train and evaluate a baseline arm
//! and the augmented arm(s) on identical splits for every seed.

mod config;
mod report;
mod run;

pub use config::{
    AugmentationConfig, DatasetConfig, ExperimentConfig, InjectionSection, ModeName, DEFAULT_BINS_SWEEP,
};
pub use report::{
    csv_rows, emit_report, render_report, ArmReport, ControllabilitySummary, CsvRow, DatasetSummary,
    EvaluationReport, ReportFormat, RunStatus, SeedResult, Timings,
};
pub use run::{load_dataset, run_experiment, run_experiment_with, stage_data, StagedData};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::gnn::ConvType;

    const SMALL: &str = r#"
name = "smoke"

[dataset]
kind = "synthetic"
num_nodes = 200
feature_dim = 8
communities = 4
intra_p = 0.08
inter_p = 0.005
seed = 3

[injection.structural]
m = 5
n = 2
seed = 1

[injection.contextual]
m = 5
n = 2
q = 20
seed = 2

[augmentation]
mode = "weight"

[model]
conv_type = "weighted_gcn"
hidden_dim = 16

[training]
epochs = 40
seeds = [0, 1]
"#;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_toml(SMALL).unwrap()
    }

    #[test]
    fn smoke_run_pairs_arms() {
        let r = run_experiment(&small()).unwrap();
        assert_eq!(r.status, RunStatus::Complete);
        let base = r.baseline.as_ref().unwrap();
        assert_eq!(base.per_seed.len(), 2);
        assert_eq!(r.augmented.len(), 1);
        assert_eq!(r.augmented[0].per_seed.len(), 2);
        for (a, b) in base.per_seed.iter().zip(&r.augmented[0].per_seed) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.split_hash, b.split_hash);
        }
        assert_eq!(r.dataset.as_ref().unwrap().num_anomalies, 20);
        assert!((r.dataset.as_ref().unwrap().prevalence - 0.1).abs() < 1e-15);
        assert!(r.controllability.is_some());
    }

    #[test]
    fn rerun_is_bit_identical() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&ExperimentConfig {
            workers: Some(1),
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(a.baseline.as_ref().unwrap().per_seed, b.baseline.as_ref().unwrap().per_seed);
        assert_eq!(a.augmented[0].per_seed, b.augmented[0].per_seed);
        assert_eq!(a.config_hash, cfg.hash());
    }

    #[test]
    fn config_round_trips_through_snapshot() {
        let cfg = small();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn incompatible_augmentation_rejected() {
        let mut cfg = small();
        cfg.augmentation.mode = ModeName::Attr;
        cfg.augmentation.bins = Some(5);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.model.conv_type = ConvType::EdgeAttrConv;
        assert!(cfg.validate().is_ok());
        cfg.augmentation.mode = ModeName::Weight;
        cfg.augmentation.bins = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_defaults_and_best_bins() {
        let mut cfg = small();
        cfg.model.conv_type = ConvType::EdgeAttrConv;
        cfg.augmentation.mode = ModeName::Attr;
        let v = cfg.augmentation.variants().unwrap();
        assert_eq!(v.iter().map(|m| m.bins().unwrap()).collect::<Vec<_>>(), DEFAULT_BINS_SWEEP);
        cfg.augmentation.bins_sweep = Some(vec![3, 6]);
        cfg.training.seeds = vec![0];
        cfg.training.epochs = 20;
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.augmented.len(), 2);
        let best = r.best_variant().unwrap();
        assert_eq!(r.best_bins, best.mode.bins());
        for a in &r.augmented {
            assert!(a.mean_auprc() <= best.mean_auprc());
        }
        let md = render_report(&r, ReportFormat::Markdown).unwrap();
        assert!(md.contains("(best)"));
    }

    #[test]
    fn reports_render() {
        let mut cfg = small();
        cfg.training.seeds = vec![4];
        let r = run_experiment(&cfg).unwrap();
        let md = render_report(&r, ReportFormat::Markdown).unwrap();
        assert!(md.contains("AUPRC Ours | AUPRC Baseline"));
        let table_rows = md.lines().filter(|l| l.starts_with("| weighted_gcn")).count();
        assert_eq!(table_rows, 1);
        assert_eq!(md, render_report(&r, ReportFormat::Markdown).unwrap());

        let csv_text = render_report(&r, ReportFormat::Csv).unwrap();
        let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
        let back: Vec<CsvRow> = rd.deserialize().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, csv_rows(&r));

        let json = render_report(&r, ReportFormat::Json).unwrap();
        let parsed: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn failing_stage_flushes_partial_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.output_dir = Some(dir.path().to_path_buf());
        cfg.injection.structural.as_mut().unwrap().n = 100;
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.stage(), Some("inject"));
        let text = std::fs::read_to_string(dir.path().join("report.partial.json")).unwrap();
        let r: EvaluationReport = serde_json::from_str(&text).unwrap();
        assert!(matches!(r.status, RunStatus::Failed { ref stage, .. } if stage == "inject"));
    }

    #[test]
    fn successful_run_writes_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.output_dir = Some(dir.path().to_path_buf());
        cfg.training.seeds = vec![0];
        run_experiment(&cfg).unwrap();
        for ext in ["json", "csv", "md"] {
            assert!(dir.path().join(format!("report.{ext}")).exists());
        }
    }

    #[test]
    fn staged_data_must_match() {
        let cfg = small();
        let staged = stage_data(&cfg).unwrap();
        let mut other = cfg.clone();
        other.controllability.step_size = 0.1;
        assert!(run_experiment_with(&other, &staged).is_err());
        let mut sage = cfg.clone();
        sage.model.conv_type = ConvType::SageMean;
        assert!(run_experiment_with(&sage, &staged).is_ok());
    }
}
