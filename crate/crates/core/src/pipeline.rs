//! End-to-end inference over an in-memory dataset or streamed from files.
//!
//! The file path reads the expression matrix twice: once to build plate
//! baselines from the controls, once to standardize and accumulate pair
//! statistics. Memory is bounded by the accumulators (regulators x genes)
//! plus the baselines, independent of the number of experiments.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{standardize_row, BaselineBuilder, PlateBaselines};
use crate::edgelist::{rank_edges, resolve_prior, PriorSpec, RankedEdgeList};
use crate::error::{Error, Result};
use crate::inference::{PairScore, RegulatorAccumulator, ScoringParams, TwoClassAccumulator};
use crate::ingest::{
    classify_experiments, count_statuses, gene_index_of, parse_metadata, ExperimentKind, ExperimentMeta,
    ExperimentStatus, ExpressionDataset, ExpressionReader,
};

/// Label used for perturbation experiments that carry no target label.
pub const DEFAULT_PERTURBATION_LABEL: &str = "perturbation";

/// Rows handed to the workers at once in knockdown mode.
const BATCH_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Knockdown,
    TwoClass,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knockdown" => Ok(Mode::Knockdown),
            "two-class" => Ok(Mode::TwoClass),
            other => Err(Error::validation(format!(
                "unknown mode {other:?} (expected knockdown or two-class)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOptions {
    pub prior: PriorSpec,
    pub scoring: ScoringParams,
    pub mode: Mode,
    /// Worker threads; 0 uses the rayon default. Output does not depend on it.
    pub threads: usize,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            prior: PriorSpec::default(),
            scoring: ScoringParams::default(),
            mode: Mode::Knockdown,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InferenceReport {
    pub mode: Mode,
    pub g_policy: String,
    pub min_experiments: usize,
    pub genes: usize,
    pub experiments: usize,
    pub plates: usize,
    pub controls: usize,
    pub usable_experiments: usize,
    pub unusable_plate_experiments: usize,
    pub off_panel_experiments: usize,
    pub regulators: usize,
    pub scored_pairs: usize,
    pub skipped_pairs: usize,
    pub passes: usize,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub peak_rss_kb: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct InferenceOutput {
    pub edges: RankedEdgeList,
    pub report: InferenceReport,
}

/// Grouping label of a non-control experiment in the two-class model.
pub fn two_class_label(meta: &ExperimentMeta) -> &str {
    meta.target_gene.as_deref().unwrap_or(DEFAULT_PERTURBATION_LABEL)
}

enum ScoringState {
    Knockdown {
        accs: Vec<Option<RegulatorAccumulator>>,
        batch: Vec<(usize, Vec<Option<f64>>)>,
    },
    TwoClass(TwoClassAccumulator),
}

/// Mode-specific accumulation shared by the in-memory and streaming paths.
struct Scorer<'a> {
    state: ScoringState,
    gene_index: &'a HashMap<String, usize>,
    n_genes: usize,
}

impl<'a> Scorer<'a> {
    fn new(mode: Mode, gene_index: &'a HashMap<String, usize>) -> Self {
        let n_genes = gene_index.len();
        let state = match mode {
            Mode::Knockdown => ScoringState::Knockdown {
                accs: (0..n_genes).map(|_| None).collect(),
                batch: Vec::with_capacity(BATCH_ROWS),
            },
            Mode::TwoClass => ScoringState::TwoClass(TwoClassAccumulator::new(n_genes)),
        };
        Scorer {
            state,
            gene_index,
            n_genes,
        }
    }

    fn wants(&self, meta: &ExperimentMeta, status: ExperimentStatus) -> bool {
        status == ExperimentStatus::Usable
            && match self.state {
                ScoringState::Knockdown { .. } => meta.kind == ExperimentKind::Knockdown,
                ScoringState::TwoClass(_) => true,
            }
    }

    fn observe(&mut self, meta: &ExperimentMeta, z_row: Vec<Option<f64>>) -> Result<()> {
        match &mut self.state {
            ScoringState::Knockdown { accs, batch } => {
                let target = meta.target_gene.as_deref().unwrap_or_default();
                let h = *self
                    .gene_index
                    .get(target)
                    .ok_or_else(|| Error::Consistency(format!("knockdown target {target} is not a gene")))?;
                if accs[h].is_none() {
                    accs[h] = Some(RegulatorAccumulator::new(h, self.n_genes));
                }
                batch.push((h, z_row));
                if batch.len() >= BATCH_ROWS {
                    Self::flush(accs, batch)?;
                }
                Ok(())
            }
            ScoringState::TwoClass(acc) => match meta.kind {
                ExperimentKind::Control => acc.observe_control(&z_row),
                _ => acc.observe_perturbed(two_class_label(meta), &z_row),
            },
        }
    }

    /// Apply a batch of rows. Each regulator's rows are applied in file order
    /// by one worker, so results do not depend on the thread count.
    fn flush(accs: &mut [Option<RegulatorAccumulator>], batch: &mut Vec<(usize, Vec<Option<f64>>)>) -> Result<()> {
        {
            let mut groups: HashMap<usize, Vec<&[Option<f64>]>> = HashMap::new();
            for (h, row) in batch.iter() {
                groups.entry(*h).or_default().push(row);
            }
            accs.par_iter_mut()
                .enumerate()
                .try_for_each(|(h, slot)| -> Result<()> {
                    if let (Some(rows), Some(acc)) = (groups.get(&h), slot.as_mut()) {
                        for row in rows {
                            acc.observe(row)?;
                        }
                    }
                    Ok(())
                })?;
        }
        batch.clear();
        Ok(())
    }

    fn finish(mut self, gene_ids: &[String], options: &InferenceOptions) -> Result<(Vec<PairScore>, usize)> {
        let prior = |h: &str, t: &str| resolve_prior(&options.prior, h, t);
        match &mut self.state {
            ScoringState::Knockdown { accs, batch } => {
                Self::flush(accs, batch)?;
                let per_regulator: Vec<Vec<PairScore>> = accs
                    .par_iter()
                    .flatten()
                    .map(|acc| acc.finish(gene_ids, prior, &options.scoring))
                    .collect::<Result<_>>()?;
                let regulators = per_regulator.len();
                Ok((per_regulator.into_iter().flatten().collect(), regulators))
            }
            ScoringState::TwoClass(acc) => {
                let groups = acc.labels().count();
                Ok((acc.finish(gene_ids, prior, &options.scoring)?, groups))
            }
        }
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Consistency(format!("cannot build thread pool: {e}")))
}

fn plate_baseline<'b>(
    baselines: &'b PlateBaselines,
    meta: &ExperimentMeta,
) -> Result<&'b crate::baseline::PlateBaseline> {
    baselines.get(&meta.plate_id).ok_or_else(|| {
        Error::Consistency(format!(
            "experiment {} references plate {} with no baseline",
            meta.experiment_id, meta.plate_id
        ))
    })
}

fn base_report(
    experiments: &[ExperimentMeta],
    status: &[ExperimentStatus],
    genes: usize,
    options: &InferenceOptions,
) -> InferenceReport {
    let counts = count_statuses(status);
    let plates: BTreeSet<&str> = experiments.iter().map(|e| e.plate_id.as_str()).collect();
    InferenceReport {
        mode: options.mode,
        g_policy: options.scoring.policy.to_string(),
        min_experiments: options.scoring.min_experiments,
        genes,
        experiments: experiments.len(),
        plates: plates.len(),
        controls: experiments.iter().filter(|e| e.kind == ExperimentKind::Control).count(),
        usable_experiments: counts.usable,
        unusable_plate_experiments: counts.unusable_plate,
        off_panel_experiments: counts.off_panel,
        passes: 2,
        threads: options.threads,
        ..Default::default()
    }
}

fn finish_report(report: &mut InferenceReport, edges: &RankedEdgeList, regulators: usize, started: Instant) {
    report.regulators = regulators;
    report.scored_pairs = edges.len();
    report.skipped_pairs = edges.insufficient;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    report.peak_rss_kb = peak_rss_kb();
}

/// Run inference on a validated in-memory dataset.
pub fn infer_dataset(dataset: &ExpressionDataset, options: &InferenceOptions) -> Result<InferenceOutput> {
    let started = Instant::now();
    let pool = thread_pool(options.threads)?;
    pool.install(|| {
        let mut builder = BaselineBuilder::new(dataset.n_genes());
        for (meta, _, row) in dataset.rows() {
            if meta.kind == ExperimentKind::Control {
                builder.observe_control(&meta.plate_id, row)?;
            }
        }
        let baselines = builder.finish();
        let mut scorer = Scorer::new(options.mode, dataset.gene_index());
        for (meta, status, row) in dataset.rows() {
            if scorer.wants(meta, status) {
                let z = standardize_row(row, plate_baseline(&baselines, meta)?)?;
                scorer.observe(meta, z)?;
            }
        }
        let (scores, regulators) = scorer.finish(dataset.gene_ids(), options)?;
        let edges = rank_edges(scores);
        let mut report = base_report(dataset.experiments(), dataset.status(), dataset.n_genes(), options);
        finish_report(&mut report, &edges, regulators, started);
        Ok(InferenceOutput { edges, report })
    })
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot open {what} file {}: {e}", path.display()),
        ))
    })
}

/// Stream inference from an expression TSV and a metadata TSV.
pub fn infer_files(expression: &Path, metadata: &Path, options: &InferenceOptions) -> Result<InferenceOutput> {
    let started = Instant::now();
    let experiments = parse_metadata(open(metadata, "metadata")?)?;
    let meta_index: HashMap<&str, usize> = experiments
        .iter()
        .enumerate()
        .map(|(i, e)| (e.experiment_id.as_str(), i))
        .collect();
    if meta_index.len() != experiments.len() {
        return Err(Error::validation("duplicate experiment id in metadata"));
    }
    let pool = thread_pool(options.threads)?;

    // Pass 1: id agreement and control baselines.
    let mut reader = ExpressionReader::new(open(expression, "expression")?)?;
    let gene_ids = reader.gene_ids().to_vec();
    let gene_index = gene_index_of(&gene_ids);
    let mut builder = BaselineBuilder::new(gene_ids.len());
    let mut seen = vec![false; experiments.len()];
    let mut only_matrix = Vec::new();
    for row in &mut reader {
        let row = row?;
        match meta_index.get(row.experiment_id.as_str()) {
            Some(&i) => {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::validation(format!(
                        "duplicate experiment id {:?} in expression matrix",
                        row.experiment_id
                    )));
                }
                if experiments[i].kind == ExperimentKind::Control {
                    builder.observe_control(&experiments[i].plate_id, &row.values)?;
                }
            }
            None => only_matrix.push(row.experiment_id),
        }
    }
    let only_meta: Vec<&str> = experiments
        .iter()
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(e, _)| e.experiment_id.as_str())
        .collect();
    if !only_matrix.is_empty() || !only_meta.is_empty() {
        return Err(Error::validation(format!(
            "experiment ids differ between matrix and metadata: only in matrix {only_matrix:?}, only in metadata {only_meta:?}"
        )));
    }
    let status = classify_experiments(&experiments, &gene_index);
    let usable_non_control = experiments
        .iter()
        .zip(&status)
        .filter(|(e, s)| e.kind != ExperimentKind::Control && **s == ExperimentStatus::Usable)
        .count();
    if usable_non_control == 0 {
        return Err(Error::EmptyDataset);
    }
    let baselines = builder.finish();

    // Pass 2: standardize and accumulate.
    pool.install(|| {
        let mut scorer = Scorer::new(options.mode, &gene_index);
        let reader = ExpressionReader::new(open(expression, "expression")?)?;
        if reader.gene_ids() != gene_ids.as_slice() {
            return Err(Error::Consistency("expression file changed between passes".into()));
        }
        for row in reader {
            let row = row?;
            let i = *meta_index
                .get(row.experiment_id.as_str())
                .ok_or_else(|| Error::Consistency("expression file changed between passes".into()))?;
            let meta = &experiments[i];
            if scorer.wants(meta, status[i]) {
                let z = standardize_row(&row.values, plate_baseline(&baselines, meta)?)?;
                scorer.observe(meta, z)?;
            }
        }
        let (scores, regulators) = scorer.finish(&gene_ids, options)?;
        let edges = rank_edges(scores);
        let mut report = base_report(&experiments, &status, gene_ids.len(), options);
        finish_report(&mut report, &edges, regulators, started);
        Ok(InferenceOutput { edges, report })
    })
}

/// Peak resident set size of this process, where the platform reports it.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}
