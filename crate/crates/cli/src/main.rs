use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ctrlgad::augment::{augment, AugmentMode, AugmentedContainer};
use ctrlgad::controllability::{average_controllability, ControllabilityConfig, Horizon, Quadrature};
use ctrlgad::gnn::{
    anomaly_scores, forward, split_nodes, train, ConvType, ModelConfig, PreparedGraph, TrainConfig,
};
use ctrlgad::graph::{load_graph_with, GraphContainer, LoadOptions};
use ctrlgad::inject::{generate_clean_graph, inject, InjectionConfig, SyntheticSpec};
use ctrlgad::metrics::{evaluate, RankedScores};
use ctrlgad::pipeline::{render_report, run_experiment, ExperimentConfig, ReportFormat};
use ctrlgad::{Error, Graph};

#[derive(Parser)]
#[command(name = "ctrlgad", version, about = "Controllability-augmented graph anomaly detection")]
struct Cli {
    /// Seed for the stage's random choices (pipeline: run only this seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for reports and printed results.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a TOML config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a clean planted-partition graph.
    Generate(GenerateArgs),
    /// Plant structural and/or contextual anomalies.
    Inject(InjectArgs),
    /// Average controllability score of every node.
    AcScore(AcScoreArgs),
    /// Attach controllability-derived edge weights and/or attributes.
    Augment(AugmentArgs),
    /// Train one model on an augmented graph.
    Train(TrainArgs),
    /// Score a ranking against labels on a test mask.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GraphInput {
    /// Graph container (JSON).
    #[arg(long, conflicts_with_all = ["edges", "features", "labels"])]
    graph: Option<PathBuf>,
    /// Edge list, one `source,target` pair per line.
    #[arg(long, requires_all = ["features", "labels"])]
    edges: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Treat the edge list as undirected.
    #[arg(long)]
    undirected: bool,
    /// Map arbitrary node ids in the edge list onto 0..N.
    #[arg(long)]
    remap_ids: bool,
}

impl GraphInput {
    fn load(&self) -> Result<Graph, Error> {
        match (&self.graph, &self.edges, &self.features, &self.labels) {
            (Some(p), ..) => GraphContainer::read(p)?.into_graph(),
            (None, Some(e), Some(f), Some(l)) => {
                let opts = LoadOptions {
                    directed: !self.undirected,
                    remap_ids: self.remap_ids,
                    ..Default::default()
                };
                load_graph_with(e, f, l, opts).map(|(g, _)| g)
            }
            _ => Err(Error::Config("give --graph or all of --edges, --features and --labels".into())),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Use the 2708-node, 64-feature, 7-community preset.
    #[arg(long)]
    cora_scale: bool,
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    #[arg(long, default_value_t = 16)]
    features: usize,
    #[arg(long, default_value_t = 4)]
    communities: usize,
    #[arg(long, default_value_t = 0.05)]
    intra_p: f64,
    #[arg(long, default_value_t = 0.002)]
    inter_p: f64,
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Structural injection as `m,n,p`.
    #[arg(long)]
    structural: Option<String>,
    /// Contextual injection as `m,n,q`.
    #[arg(long)]
    contextual: Option<String>,
    /// Where to write the list of planted nodes (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct AcScoreArgs {
    #[command(flatten)]
    input: GraphInput,
    #[arg(long, default_value_t = 0.2)]
    step_size: f64,
    /// Fixed horizon T instead of the adaptive one.
    #[arg(long)]
    horizon: Option<f64>,
    /// Use trapezoidal instead of right Riemann quadrature.
    #[arg(long)]
    trapezoidal: bool,
    /// Score the directed graph as given instead of its symmetrization.
    #[arg(long)]
    directed: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Weight,
    Attr,
    Both,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Score file, one value per line, as written by `ac-score`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Augmented graph container written by `augment`.
    #[arg(long)]
    graph: PathBuf,
    /// TOML file with optional [model] and [training] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    conv: Option<ConvArg>,
    /// Ignore the augmentation: unit weights and zero edge attributes.
    #[arg(long)]
    baseline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvArg {
    WeightedGcn,
    SageMean,
    GinSum,
    EdgeAttrConv,
}

impl From<ConvArg> for ConvType {
    fn from(c: ConvArg) -> Self {
        match c {
            ConvArg::WeightedGcn => ConvType::WeightedGcn,
            ConvArg::SageMean => ConvType::SageMean,
            ConvArg::GinSum => ConvType::GinSum,
            ConvArg::EdgeAttrConv => ConvType::EdgeAttrConv,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// One score per line.
    #[arg(long)]
    scores: PathBuf,
    /// One 0/1 label per line.
    #[arg(long)]
    labels: PathBuf,
    /// One 0/1 test-mask flag per line; every node when absent.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Append the metrics as a row to this CSV file.
    #[arg(long)]
    append: Option<PathBuf>,
}

#[derive(serde::Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    model: ModelConfig,
    training: TrainConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn stage<T>(r: Result<T, Error>, name: &'static str) -> Result<T> {
    r.map_err(|e| e.in_stage(name).into())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pipeline { config } => cmd_pipeline(cli, config),
        Command::Generate(a) => cmd_generate(cli, a),
        Command::Inject(a) => cmd_inject(cli, a),
        Command::AcScore(a) => cmd_ac_score(cli, a),
        Command::Augment(a) => cmd_augment(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
    }
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().context("--out is required for this command")
}

fn cmd_pipeline(cli: &Cli, path: &Path) -> Result<()> {
    let mut cfg = stage(ExperimentConfig::load(path), "config")?;
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.training.seeds = vec![seed];
    }
    let report = run_experiment(&cfg)?;
    let format = cli.format.map_or(ReportFormat::Markdown, ReportFormat::from);
    print!("{}", stage(render_report(&report, format), "report")?);
    Ok(())
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let spec = if a.cora_scale {
        SyntheticSpec::cora_scale(seed)
    } else {
        SyntheticSpec {
            num_nodes: a.nodes,
            feature_dim: a.features,
            communities: a.communities,
            intra_p: a.intra_p,
            inter_p: a.inter_p,
            seed,
            feature_noise: 1.0,
        }
    };
    let g = stage(generate_clean_graph(&spec), "generate")?;
    let out = require_out(cli)?;
    stage(GraphContainer::from_graph(&g).write(out), "generate")?;
    info!("wrote {} nodes, {} edges to {}", g.num_nodes(), g.num_edges(), out.display());
    Ok(())
}

fn parse_triple(s: &str, what: &str) -> Result<(usize, usize, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("--{what} expects three comma-separated values, got {s:?}");
    }
    let m = parts[0].parse().with_context(|| format!("--{what}: bad m {:?}", parts[0]))?;
    let n = parts[1].parse().with_context(|| format!("--{what}: bad n {:?}", parts[1]))?;
    let x = parts[2].parse().with_context(|| format!("--{what}: bad third value {:?}", parts[2]))?;
    Ok((m, n, x))
}

fn cmd_inject(cli: &Cli, a: &InjectArgs) -> Result<()> {
    if a.structural.is_none() && a.contextual.is_none() {
        bail!("give --structural and/or --contextual");
    }
    let seed = cli.seed.unwrap_or(0);
    let structural = match &a.structural {
        Some(s) => {
            let (m, n, p) = parse_triple(s, "structural")?;
            Some(InjectionConfig::structural(m, n, p, seed))
        }
        None => None,
    };
    let contextual = match &a.contextual {
        Some(s) => {
            let (m, n, q) = parse_triple(s, "contextual")?;
            if q.fract() != 0.0 || q < 0.0 {
                bail!("--contextual: q must be a whole number");
            }
            // A separate stream so both injections do not share draws.
            Some(InjectionConfig::contextual(m, n, q as usize, seed.wrapping_add(1)))
        }
        None => None,
    };
    let g = stage(a.input.load(), "load")?;
    let (g, manifest) = stage(inject(&g, structural.as_ref(), contextual.as_ref()), "inject")?;
    let out = require_out(cli)?;
    stage(GraphContainer::from_graph(&g).write(out), "inject")?;
    if let Some(p) = &a.manifest {
        fs::write(p, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "anomalies: {} of {} nodes (prevalence {:.4})",
        g.num_anomalies(),
        g.num_nodes(),
        g.num_anomalies() as f64 / g.num_nodes() as f64
    );
    Ok(())
}

fn cmd_ac_score(cli: &Cli, a: &AcScoreArgs) -> Result<()> {
    let g = stage(a.input.load(), "load")?;
    let cfg = ControllabilityConfig {
        step_size: a.step_size,
        horizon: match a.horizon {
            Some(time) => Horizon::Fixed { time },
            None => Horizon::default(),
        },
        quadrature: if a.trapezoidal {
            Quadrature::Trapezoidal
        } else {
            Quadrature::RightRiemann
        },
        directed: a.directed,
        ..Default::default()
    };
    let r = stage(average_controllability(&g, &cfg), "controllability")?;
    let text = match cli.format {
        Some(Format::Json) => serde_json::to_string_pretty(&serde_json::json!({
            "scores": r.scores,
            "spectral_radius": r.spectral_radius,
            "steps_used": r.steps_used,
            "horizon": r.horizon(a.step_size),
        }))? + "\n",
        _ => lines(&r.scores),
    };
    write_or_print(cli.out.as_deref(), &text)
}

fn lines(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_column<T: std::str::FromStr>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("{}:{}: cannot parse {:?}", path.display(), i + 1, l.trim()))
        })
        .collect()
}

fn cmd_augment(cli: &Cli, a: &AugmentArgs) -> Result<()> {
    let g = stage(a.input.load(), "load")?.symmetrize();
    let scores: Vec<f64> = read_column(&a.scores)?;
    let mode = match (a.mode, a.bins) {
        (ModeArg::Weight, None) => AugmentMode::Weight,
        (ModeArg::Weight, Some(_)) => bail!("--bins only applies to attr and both"),
        (ModeArg::Attr, Some(bins)) => AugmentMode::Attr { bins },
        (ModeArg::Both, Some(bins)) => AugmentMode::Both { bins },
        (_, None) => bail!("--bins is required for attr and both"),
    };
    let aug = stage(augment(&g, &scores, mode), "augment")?;
    let out = require_out(cli)?;
    stage(AugmentedContainer::from_augmented(&aug, Some(&scores)).write(out), "augment")?;
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut tf = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<TrainFile>(&text).map_err(|e| Error::Toml(e.to_string()).in_stage("config"))?
        }
        None => TrainFile::default(),
    };
    if let Some(c) = a.conv {
        tf.model.conv_type = c.into();
    }
    let aug = stage(AugmentedContainer::read(&a.graph).and_then(|c| c.into_augmented()), "load")?;
    if tf.model.conv_type.uses_attrs() && tf.model.attr_dim.is_none() {
        tf.model.attr_dim = aug.num_bins();
    }
    let g = if a.baseline {
        PreparedGraph::baseline(aug.base(), &tf.model)
    } else {
        PreparedGraph::new(&aug, &tf.model)
    };
    let g = stage(g, "train")?;
    let seed = cli.seed.or(tf.training.seeds.first().copied()).unwrap_or(0);
    let labels = aug.base().labels();
    let train_mask = split_nodes(labels, &tf.training.split, seed);
    let outcome = stage(train(&g, labels, &train_mask, &tf.model, &tf.training, seed), "train")?;
    let scores = anomaly_scores(&stage(forward(&outcome.state, &g), "train")?);

    let dir = require_out(cli)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    stage(outcome.state.save(&dir.join("model.json")), "train")?;
    let mut w = csv::Writer::from_path(dir.join("loss_trace.csv"))?;
    w.write_record(["epoch", "loss"])?;
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    fs::write(dir.join("scores.txt"), lines(&scores))?;
    let test: String = train_mask.iter().map(|&m| if m { "0\n" } else { "1\n" }).collect();
    fs::write(dir.join("test_mask.txt"), test)?;
    let labels_text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(dir.join("labels.txt"), labels_text)?;
    info!(
        "trained {} for {} epochs; final loss {:.5}",
        tf.model.conv_type.name(),
        outcome.loss_trace.len(),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let scores: Vec<f64> = read_column(&a.scores)?;
    let labels: Vec<u8> = read_column(&a.labels)?;
    let mask = match &a.mask {
        Some(p) => read_column::<u8>(p)?.into_iter().map(|m| m != 0).collect(),
        None => vec![true; scores.len()],
    };
    let ranked = stage(RankedScores::new(scores, labels, mask), "evaluate")?;
    let m = stage(evaluate(&ranked), "evaluate")?;
    let text = match cli.format {
        Some(Format::Json) => serde_json::to_string(&m)? + "\n",
        Some(Format::Csv) => format!("auroc,auprc,rec_at_k\n{},{},{}\n", m.auroc, m.auprc, m.rec_at_k),
        _ => format!("AUROC {:.5}  AUPRC {:.5}  Rec@K {:.5}\n", m.auroc, m.auprc, m.rec_at_k),
    };
    write_or_print(cli.out.as_deref(), &text)?;
    if let Some(p) = &a.append {
        let fresh = !p.exists();
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(p)
            .with_context(|| format!("opening {}", p.display()))?;
        let mut w = csv::Writer::from_writer(file);
        if fresh {
            w.write_record(["scores", "auroc", "auprc", "rec_at_k"])?;
        }
        w.write_record([
            a.scores.display().to_string(),
            m.auroc.to_string(),
            m.auprc.to_string(),
            m.rec_at_k.to_string(),
        ])?;
        w.flush()?;
    }
    Ok(())
}
