//! End-to-end runner: data → difficulty labels → sampling → network → k-means.

mod config;
mod synth;

pub use config::{ExperimentConfig, OutputSection, SamplingSection, TrainingSection, Variant};
pub use synth::{generate as generate_synthetic, make_synthetic, SynthSpec};

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ais::{
    assign_all, assign_difficulty, collect_inconsistent, resolve_labels, AisError, AisModel,
    Difficulty, DifficultyAssignment,
};
use crate::clustering::{kmeans, ClusterError, MetricReport};
use crate::data::{
    build_partition, choose_anchor, default_k_neighbors, read_labels, DataError, Manifest,
    MultiViewDataset,
};
use crate::mvnet::{
    train, write_training_log, Checkpoint, EpochLog, GateMode, MultiViewModel, MvnetError,
    TrainConfig,
};
use crate::numeric::{seeded_rng, Matrix};
use crate::sampling::{
    compute_probabilities, pace_value, selection_mask, single_view_probabilities,
    write_sampling_dump, SamplingError, SamplingState, SAMPLING_DUMP_HEADER,
};
use crate::streams;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ais stage: {0}")]
    Ais(#[from] AisError),
    #[error("sampling stage: {0}")]
    Sampling(#[from] SamplingError),
    #[error("mvnet stage: {0}")]
    Mvnet(#[from] MvnetError),
    #[error("clustering stage: {0}")]
    Cluster(#[from] ClusterError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) | Self::Io { .. } => 3,
            Self::Mvnet(MvnetError::Checkpoint(_)) => 3,
            Self::Cluster(ClusterError::TooFewSamples { .. } | ClusterError::ZeroClusters) => 2,
            Self::Cluster(ClusterError::EmptyLabels | ClusterError::LabelLength { .. }) => 3,
            Self::Ais(_)
            | Self::Sampling(_)
            | Self::Mvnet(_)
            | Self::Cluster(ClusterError::NonFinite) => 4,
        }
    }
}

/// Summary of one run. Everything except `wall_clock_seconds` is a pure
/// function of the config and the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub seed: u64,
    pub n_samples: usize,
    pub n_views: usize,
    pub clusters: usize,
    pub anchor: usize,
    pub k_neighbors: usize,
    /// View whose labels drive the curriculum in the single-view variants.
    pub best_view: Option<usize>,
    /// Samples labelled differently by at least two views before reconciliation.
    pub inconsistent_samples: usize,
    /// Classifier agreement on inconsistent pairs before and after adversarial training.
    pub ais_agreement: Option<(f64, f64)>,
    pub clamp_events: usize,
    pub gate_opened_at: Option<usize>,
    pub epochs: usize,
    pub kmeans_objective: f64,
    pub metrics: Option<MetricReport>,
    pub training_log: String,
    pub wall_clock_seconds: f64,
    pub config: ExperimentConfig,
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub log: Vec<EpochLog>,
    /// `n × p` common subspace.
    pub embeddings: Matrix,
    pub predicted: Vec<usize>,
    pub raw_labels: DifficultyAssignment,
    pub resolved_labels: DifficultyAssignment,
    pub sampling: SamplingState,
    pub model: MultiViewModel,
}

pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const METRICS_TABLE_FILE: &str = "metrics_table.txt";
pub const REPORT_FILE: &str = "report.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const DIFFICULTY_FILE: &str = "difficulty.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const SAMPLING_DUMP_FILE: &str = "sampling_dump.csv";

fn cluster_count(
    config: &ExperimentConfig,
    data: &MultiViewDataset,
) -> Result<usize, ExperimentError> {
    config.clusters.or_else(|| data.n_classes()).ok_or_else(|| {
        ExperimentError::Config("set `clusters`: the dataset has no labels to infer it from".into())
    })
}

/// Index of the view whose own k-means clustering scores the highest ACC
/// (lowest index on ties); view 0 when the data is unlabelled.
pub fn best_single_view(
    data: &MultiViewDataset,
    clusters: usize,
    config: &ExperimentConfig,
) -> Result<usize, ExperimentError> {
    let Some(truth) = data.labels() else {
        log::warn!("no labels to rank views by; view 0 drives the curriculum");
        return Ok(0);
    };
    let mut best = (0, f64::NEG_INFINITY);
    for (v, view) in data.views().iter().enumerate() {
        let model = kmeans(view, clusters, &config.kmeans, config.seed)?;
        let acc = MetricReport::evaluate(&model.assignments, truth)?.acc;
        log::info!("view {v}: single-view k-means ACC {acc:.4}");
        if acc > best.1 {
            best = (v, acc);
        }
    }
    log::info!("view {} drives the curriculum", best.0);
    Ok(best.0)
}

/// Runs the configured variant on an already loaded (and normalized) dataset.
pub fn run_on_dataset(
    config: &ExperimentConfig,
    data: &MultiViewDataset,
) -> Result<RunOutcome, ExperimentError> {
    config.validate()?;
    let start = Instant::now();
    let n = data.n_samples();
    let clusters = cluster_count(config, data)?;
    let variant = config.variant;

    let anchor = choose_anchor(n, config.seed);
    let k_neighbors = config
        .sampling
        .k_neighbors
        .unwrap_or_else(|| default_k_neighbors(n));
    let partitions = (0..data.n_views())
        .map(|v| build_partition(data, v, anchor, k_neighbors))
        .collect::<Result<Vec<_>, _>>()?;
    let raw_labels = assign_all(&partitions, config.ais.mu)?;
    let inconsistent_samples = collect_inconsistent(&raw_labels.views).samples().len();
    log::info!("{variant}: anchor {anchor}, k = {k_neighbors}, {inconsistent_samples} inconsistent samples");

    let mut best_view = None;
    let mut ais_agreement = None;
    let mut resolved_labels = raw_labels.clone();
    let sampling = match variant {
        Variant::None => SamplingState::uniform(n, data.n_views()),
        Variant::Cs | Variant::CsGs => {
            let v = best_single_view(data, clusters, config)?;
            best_view = Some(v);
            let labels = assign_difficulty(&partitions[v], config.ais.mu)?;
            single_view_probabilities(&labels.labels, &partitions[v])?
        }
        Variant::AisCs | Variant::Full => {
            let mut ais = AisModel::new(
                config.ais.clone(),
                &data.view_dims(),
                config.adam,
                &mut seeded_rng(config.seed, streams::AIS_INIT),
            );
            let pairs = collect_inconsistent(&raw_labels.views);
            let before = ais.agreement_rate(data.views(), &pairs.pairs)?;
            let stats = ais.train(
                data.views(),
                &raw_labels,
                &mut seeded_rng(config.seed, streams::AIS_BATCHES),
            )?;
            let after = ais.agreement_rate(data.views(), &pairs.pairs)?;
            if let Some(last) = stats.last() {
                log::info!(
                    "ais: agreement {before:.3} -> {after:.3}, final objective {:.5}",
                    last.objective
                );
            }
            ais_agreement = Some((before, after));
            resolved_labels = resolve_labels(&ais, data.views(), &raw_labels)?;
            compute_probabilities(&resolved_labels, &partitions)?
        }
    };
    if sampling.clamp_events > 0 {
        log::warn!(
            "difficult probabilities were clamped in {} view(s)",
            sampling.clamp_events
        );
    }

    let mut model = MultiViewModel::new(
        config.network.clone(),
        &data.view_dims(),
        config.adam,
        &mut seeded_rng(config.seed, streams::MVNET_INIT),
    )
    .map_err(MvnetError::from)?;
    let train_config = TrainConfig {
        batch_size: config.training.batch_size,
        schedule: config.pace(),
        gate_mode: if variant.uses_gate() {
            GateMode::GoldenSection
        } else {
            GateMode::AlwaysOpen
        },
        sigma: config.training.sigma,
    };
    let trained = train(
        &mut model,
        data.views(),
        &sampling,
        &train_config,
        &mut seeded_rng(config.seed, streams::MVNET_BATCHES),
    )?;

    let clustering = kmeans(&trained.subspace.z, clusters, &config.kmeans, config.seed)?;
    let metrics = data
        .labels()
        .map(|truth| MetricReport::evaluate(&clustering.assignments, truth))
        .transpose()?;
    if let Some(m) = &metrics {
        log::info!(
            "{variant}: ACC {:.4}, NMI {:.4}, Purity {:.4}",
            m.acc,
            m.nmi,
            m.purity
        );
    }

    let report = RunReport {
        variant,
        seed: config.seed,
        n_samples: n,
        n_views: data.n_views(),
        clusters,
        anchor,
        k_neighbors,
        best_view,
        inconsistent_samples,
        ais_agreement,
        clamp_events: sampling.clamp_events,
        gate_opened_at: trained.gate_opened_at,
        epochs: config.training.epochs,
        kmeans_objective: clustering.objective,
        metrics,
        training_log: TRAINING_LOG_FILE.into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    Ok(RunOutcome {
        report,
        log: trained.log,
        embeddings: trained.subspace.z,
        predicted: clustering.assignments,
        raw_labels,
        resolved_labels,
        sampling,
        model,
    })
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<MultiViewDataset, ExperimentError> {
    Ok(Manifest::from_file(&config.manifest)?.load()?)
}

/// Loads the manifest's dataset and runs the configured variant.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    config.validate()?;
    let data = load_dataset(config)?;
    run_on_dataset(config, &data)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ExperimentError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

/// `z0,…,z{p-1},cluster` with one row per sample in dataset order.
pub fn embeddings_csv(z: &Matrix, predicted: &[usize]) -> String {
    let mut s = String::new();
    for j in 0..z.cols() {
        let _ = write!(s, "z{j},");
    }
    s.push_str("cluster\n");
    for (row, c) in z.iter_rows().zip(predicted) {
        for v in row {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{c}");
    }
    s
}

/// Reads an embeddings file back into the latent matrix and the cluster column.
pub fn read_embeddings(path: &Path) -> Result<(Matrix, Vec<usize>), ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    let parse_err = |line: usize, msg: &str| {
        ExperimentError::Data(DataError::Manifest {
            path: path.to_path_buf(),
            message: format!("line {line}: {msg}"),
        })
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let p = header.split(',').count().checked_sub(1).filter(|&p| p > 0);
    let p = p.ok_or_else(|| parse_err(1, "expected z columns and a cluster column"))?;
    let mut data = Vec::new();
    let mut clusters = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(parse_err(i + 2, "wrong number of columns"));
        }
        for f in &fields[..p] {
            data.push(
                f.parse::<f64>()
                    .map_err(|_| parse_err(i + 2, "bad number"))?,
            );
        }
        clusters.push(
            fields[p]
                .parse::<usize>()
                .map_err(|_| parse_err(i + 2, "bad cluster id"))?,
        );
    }
    let rows = clusters.len();
    let z = Matrix::from_vec(rows, p, data).map_err(|e| parse_err(0, &e.to_string()))?;
    Ok((z, clusters))
}

fn difficulty_csv(
    raw: &DifficultyAssignment,
    resolved: &DifficultyAssignment,
    regions: &[Vec<&str>],
) -> String {
    let mut s = String::from("sample_index,view,region,raw_label,resolved_label\n");
    let n = raw.n_samples();
    let tag = |d: Difficulty| match d {
        Difficulty::Easy => "easy",
        Difficulty::Difficult => "difficult",
    };
    for k in 0..n {
        for v in 0..raw.views.len() {
            let _ = writeln!(
                s,
                "{k},{v},{},{},{}",
                regions[v][k],
                tag(raw.label(v, k)),
                tag(resolved.label(v, k))
            );
        }
    }
    s
}

/// Writes every artifact of `outcome` into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let report = &outcome.report;

    let mut echo = report.config.clone();
    echo.manifest = fs::canonicalize(&echo.manifest).unwrap_or(echo.manifest);
    write_text(&dir.join(CONFIG_ECHO_FILE), &echo.to_toml())?;

    if let Some(m) = &report.metrics {
        write_text(&dir.join(METRICS_FILE), &m.to_kv())?;
        write_text(&dir.join(METRICS_TABLE_FILE), &m.to_table())?;
    }
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_text(&dir.join(REPORT_FILE), &json)?;

    let path = dir.join(TRAINING_LOG_FILE);
    let mut out = create(&path)?;
    write_training_log(&mut out, &outcome.log)
        .and_then(|()| out.flush())
        .map_err(|e| ExperimentError::io(&path, e))?;

    write_text(
        &dir.join(EMBEDDINGS_FILE),
        &embeddings_csv(&outcome.embeddings, &outcome.predicted),
    )?;

    let regions: Vec<Vec<&str>> = outcome
        .raw_labels
        .views
        .iter()
        .map(|v| {
            v.regions
                .iter()
                .map(|r| r.map_or("anchor", |r| r.tag()))
                .collect()
        })
        .collect();
    write_text(
        &dir.join(DIFFICULTY_FILE),
        &difficulty_csv(&outcome.raw_labels, &outcome.resolved_labels, &regions),
    )?;

    Checkpoint::new(outcome.model.clone(), report.seed, report.epochs)
        .save(&dir.join(CHECKPOINT_FILE))?;

    if report.config.output.sampling_dump {
        let path = dir.join(SAMPLING_DUMP_FILE);
        let schedule = report.config.pace();
        let sorted = outcome.sampling.sorted_descending();
        let mut out = create(&path)?;
        let result = (|| {
            writeln!(out, "{SAMPLING_DUMP_HEADER}")?;
            for epoch in 0..schedule.max_epochs {
                let lambda = pace_value(&schedule, epoch, &sorted);
                let mask = selection_mask(&outcome.sampling.mean, lambda);
                write_sampling_dump(&mut out, epoch, &outcome.sampling.mean, &mask)?;
            }
            out.flush()
        })();
        result.map_err(|e| ExperimentError::io(&path, e))?;
    }
    Ok(())
}

/// Runs the config and writes its artifacts to `config.output_dir`.
pub fn run_and_write(config: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let outcome = run(config)?;
    write_outputs(&outcome, &config.output_dir)?;
    Ok(outcome.report)
}

/// Re-derives the embeddings of a finished run from its checkpoint and
/// writes them to `out`. Returns the number of rows written.
pub fn export_embeddings(run_dir: &Path, out: &Path) -> Result<usize, ExperimentError> {
    let config_path = run_dir.join(CONFIG_ECHO_FILE);
    let checkpoint_path = run_dir.join(CHECKPOINT_FILE);
    for p in [&config_path, &checkpoint_path] {
        if !p.is_file() {
            return Err(ExperimentError::Config(format!(
                "{} is not a finished run: {} is missing",
                run_dir.display(),
                p.display()
            )));
        }
    }
    let config = ExperimentConfig::from_file(&config_path)?;
    let checkpoint = Checkpoint::load(&checkpoint_path)?;
    let data = load_dataset(&config)?;
    let clusters = cluster_count(&config, &data)?;
    let subspace = checkpoint.model.common_subspace(data.views())?;
    let clustering = kmeans(&subspace.z, clusters, &config.kmeans, config.seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    write_text(out, &embeddings_csv(&subspace.z, &clustering.assignments))?;
    Ok(data.n_samples())
}

/// Metrics for a predicted-label file against a ground-truth label file.
pub fn evaluate_files(pred: &Path, truth: &Path) -> Result<MetricReport, ExperimentError> {
    let pred = read_labels(pred)?;
    let truth = read_labels(truth)?;
    Ok(MetricReport::evaluate(&pred, &truth)?)
}

/// Runs every variant on one config (same data and seed) and writes each
/// run into `<output_dir>/<variant>`.
pub fn ablate(
    config: &ExperimentConfig,
    variants: &[Variant],
) -> Result<Vec<RunReport>, ExperimentError> {
    config.validate()?;
    let data = load_dataset(config)?;
    let mut reports = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut c = config.clone();
        c.variant = variant;
        c.output_dir = config.output_dir.join(variant.slug());
        let outcome = run_on_dataset(&c, &data)?;
        write_outputs(&outcome, &c.output_dir)?;
        reports.push(outcome.report);
    }
    write_text(
        &config.output_dir.join("ablation.txt"),
        &ablation_table(&reports),
    )?;
    Ok(reports)
}

pub fn ablation_table(reports: &[RunReport]) -> String {
    let mut s = String::from("variant   ACC     NMI     Purity\n");
    for r in reports {
        match &r.metrics {
            Some(m) => {
                let _ = writeln!(
                    s,
                    "{:<9} {:.4}  {:.4}  {:.4}",
                    r.variant.tag(),
                    m.acc,
                    m.nmi,
                    m.purity
                );
            }
            None => {
                let _ = writeln!(s, "{:<9} (no labels)", r.variant.tag());
            }
        }
    }
    s
}
