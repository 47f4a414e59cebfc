//! Per-plate control baselines and plate-level z-scores.
//!
//! Baselines are built from mergeable running statistics so controls can be
//! accumulated in a single streaming pass, in any order or partition.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::{ExperimentKind, ExperimentMeta, ExperimentStatus, ExpressionDataset};

/// Count, mean and sum of squared deviations of a stream of values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut s = Self::new();
        for &v in values {
            s.push(v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite observation {value}")));
        }
        self.n += 1;
        let delta = value - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (value - self.mean);
        Ok(())
    }

    /// Combine two summaries as if both streams had been pushed into one.
    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let (na, nb, nf) = (self.n as f64, other.n as f64, n as f64);
        let delta = other.mean - self.mean;
        RunningStats {
            n,
            mean: self.mean + delta * (nb / nf),
            m2: self.m2 + other.m2 + delta * delta * (na * nb / nf),
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Sample variance (divisor n - 1); `None` below two observations.
    pub fn sample_variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2.max(0.0) / (self.n - 1) as f64)
    }

    pub fn sample_sd(&self) -> Option<f64> {
        self.sample_variance().map(f64::sqrt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneBaseline {
    pub mean: f64,
    pub sd: f64,
    pub n_controls: u64,
    pub valid: bool,
}

impl GeneBaseline {
    pub fn from_stats(stats: &RunningStats) -> Self {
        let sd = stats.sample_sd().unwrap_or(0.0);
        GeneBaseline {
            mean: stats.mean(),
            sd,
            n_controls: stats.count(),
            valid: stats.count() >= 2 && sd > 0.0 && sd.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateBaseline {
    pub plate_id: String,
    pub genes: Vec<GeneBaseline>,
}

pub type PlateBaselines = BTreeMap<String, PlateBaseline>;

/// Accumulates control rows per plate. Builders over disjoint subsets of the
/// controls can be merged.
#[derive(Debug, Clone)]
pub struct BaselineBuilder {
    n_genes: usize,
    plates: BTreeMap<String, Vec<RunningStats>>,
}

impl BaselineBuilder {
    pub fn new(n_genes: usize) -> Self {
        BaselineBuilder {
            n_genes,
            plates: BTreeMap::new(),
        }
    }

    pub fn observe_control(&mut self, plate_id: &str, row: &[Option<f64>]) -> Result<()> {
        if row.len() != self.n_genes {
            return Err(Error::Consistency(format!(
                "control row has {} values, expected {}",
                row.len(),
                self.n_genes
            )));
        }
        let stats = match self.plates.get_mut(plate_id) {
            Some(s) => s,
            None => self
                .plates
                .entry(plate_id.to_owned())
                .or_insert_with(|| vec![RunningStats::new(); row.len()]),
        };
        for (s, v) in stats.iter_mut().zip(row) {
            if let Some(v) = v {
                s.push(*v)?;
            }
        }
        Ok(())
    }

    pub fn merge(mut self, other: BaselineBuilder) -> Result<BaselineBuilder> {
        if self.n_genes != other.n_genes {
            return Err(Error::Consistency("merging baselines over different gene sets".into()));
        }
        for (plate, stats) in other.plates {
            match self.plates.get_mut(&plate) {
                Some(mine) => {
                    for (a, b) in mine.iter_mut().zip(&stats) {
                        *a = a.merge(b);
                    }
                }
                None => {
                    self.plates.insert(plate, stats);
                }
            }
        }
        Ok(self)
    }

    pub fn plate_stats(&self) -> &BTreeMap<String, Vec<RunningStats>> {
        &self.plates
    }

    pub fn finish(self) -> PlateBaselines {
        self.plates
            .into_iter()
            .map(|(plate_id, stats)| {
                let genes = stats.iter().map(GeneBaseline::from_stats).collect();
                (plate_id.clone(), PlateBaseline { plate_id, genes })
            })
            .collect()
    }
}

pub fn compute_plate_baselines(dataset: &ExpressionDataset) -> Result<PlateBaselines> {
    let mut builder = BaselineBuilder::new(dataset.n_genes());
    for (meta, _, row) in dataset.rows() {
        if meta.kind == ExperimentKind::Control {
            builder.observe_control(&meta.plate_id, row)?;
        }
    }
    Ok(builder.finish())
}

pub fn zscore(x: f64, baseline: &GeneBaseline) -> Result<f64> {
    if !baseline.valid {
        return Err(Error::DegenerateBaseline(format!(
            "baseline with sd {} from {} controls",
            baseline.sd, baseline.n_controls
        )));
    }
    let z = (x - baseline.mean) / baseline.sd;
    if !z.is_finite() {
        return Err(Error::Numeric(format!("z-score of {x} overflowed")));
    }
    Ok(z)
}

/// Standardize one raw row against its plate baseline. Values are missing
/// where the raw value is missing or the plate-gene baseline is invalid.
pub fn standardize_row(row: &[Option<f64>], plate: &PlateBaseline) -> Result<Vec<Option<f64>>> {
    if row.len() != plate.genes.len() {
        return Err(Error::Consistency(format!(
            "row has {} values, plate {} baseline has {}",
            row.len(),
            plate.plate_id,
            plate.genes.len()
        )));
    }
    row.iter()
        .zip(&plate.genes)
        .map(|(v, b)| match v {
            Some(x) if b.valid => zscore(*x, b).map(Some),
            _ => Ok(None),
        })
        .collect()
}

/// Plate-level z-scores for a selection of experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreMatrix {
    pub gene_ids: Vec<String>,
    pub experiments: Vec<ExperimentMeta>,
    /// Row-major, one row per entry of `experiments`.
    pub z: Vec<Option<f64>>,
}

impl ZScoreMatrix {
    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_rows(&self) -> usize {
        self.experiments.len()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let g = self.n_genes();
        &self.z[i * g..(i + 1) * g]
    }

    pub fn column(&self, gene: usize) -> Vec<Option<f64>> {
        (0..self.n_rows()).map(|i| self.row(i)[gene]).collect()
    }

    pub fn gene_position(&self, gene: &str) -> Option<usize> {
        self.gene_ids.iter().position(|g| g == gene)
    }
}

fn standardize_selected(
    dataset: &ExpressionDataset,
    baselines: &PlateBaselines,
    select: impl Fn(&ExperimentMeta) -> bool,
) -> Result<ZScoreMatrix> {
    let mut experiments = Vec::new();
    let mut z = Vec::new();
    for (meta, status, row) in dataset.rows() {
        if status != ExperimentStatus::Usable || !select(meta) {
            continue;
        }
        let plate = baselines.get(&meta.plate_id).ok_or_else(|| {
            Error::Consistency(format!(
                "experiment {} references plate {} with no baseline",
                meta.experiment_id, meta.plate_id
            ))
        })?;
        z.extend(standardize_row(row, plate)?);
        experiments.push(meta.clone());
    }
    Ok(ZScoreMatrix {
        gene_ids: dataset.gene_ids().to_vec(),
        experiments,
        z,
    })
}

/// Z-scores of every usable knockdown and perturbation experiment.
pub fn standardize(dataset: &ExpressionDataset, baselines: &PlateBaselines) -> Result<ZScoreMatrix> {
    standardize_selected(dataset, baselines, |m| m.kind != ExperimentKind::Control)
}

/// Z-scores of the control experiments against their own plate baseline,
/// used as the reference class of the two-class model.
pub fn standardize_controls(dataset: &ExpressionDataset, baselines: &PlateBaselines) -> Result<ZScoreMatrix> {
    standardize_selected(dataset, baselines, |m| m.kind == ExperimentKind::Control)
}

/// Debug dump: `plate_id, gene_id, mean, sd, n_controls, valid`.
pub fn write_baselines<W: Write>(mut sink: W, gene_ids: &[String], baselines: &PlateBaselines) -> Result<()> {
    writeln!(sink, "plate_id\tgene_id\tmean\tsd\tn_controls\tvalid")?;
    for plate in baselines.values() {
        for (g, b) in gene_ids.iter().zip(&plate.genes) {
            writeln!(
                sink,
                "{}\t{}\t{}\t{}\t{}\t{}",
                plate.plate_id, g, b.mean, b.sd, b.n_controls, b.valid
            )?;
        }
    }
    Ok(())
}
