//! Seeded synthetic networks and plate-structured knockdown datasets.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Independent streams are used per purpose: stream 0
//! draws the network, stream 1 the global gene means, and stream `2 + p`
//! everything on plate `p`. A plate's values therefore do not depend on the
//! other plates.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::edgelist::format_real;
use crate::error::{Error, Result};
use crate::ingest::{validate_dataset, ExperimentKind, ExperimentMeta, ExpressionDataset, ExpressionMatrix};

pub const GENERATOR: &str = "ChaCha8Rng/rand_chacha-0.9";

const NETWORK_STREAM: u64 = 0;
const GENE_MEAN_STREAM: u64 = 1;
const FIRST_PLATE_STREAM: u64 = 2;

const EFFECT_MIN: f64 = 0.5;
const EFFECT_MAX: f64 = 2.0;
const GENE_MEAN_RANGE: (f64, f64) = (4.0, 12.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_genes: usize,
    pub n_regulators: usize,
    pub edge_density: f64,
    pub plates: usize,
    pub controls_per_plate: usize,
    pub knockdowns_per_regulator: usize,
    /// Shift of the knocked-down gene, in units of the control SD. Negative.
    pub knockdown_strength: f64,
    pub noise_sd: f64,
    pub plate_shift_sd: f64,
    pub seed: u64,
    /// Per-experiment knockdown efficacy is uniform on `1 ± efficacy_spread`.
    pub efficacy_spread: f64,
    /// Apply one extra round of propagation through the network, producing
    /// indirect effects.
    pub propagate_indirect: bool,
    /// Probability that any single value is written as missing.
    pub missing_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_genes: 100,
            n_regulators: 20,
            edge_density: 0.05,
            plates: 10,
            controls_per_plate: 8,
            knockdowns_per_regulator: 12,
            knockdown_strength: -5.0,
            noise_sd: 1.0,
            plate_shift_sd: 0.5,
            seed: 7,
            efficacy_spread: 0.75,
            propagate_indirect: false,
            missing_rate: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::validation(format!("sim config field {field}: {msg}")));
        if self.n_genes < 2 {
            return fail("n_genes", format!("need at least 2 genes, got {}", self.n_genes));
        }
        if self.n_regulators == 0 || self.n_regulators > self.n_genes {
            return fail(
                "n_regulators",
                format!("must be in 1..={}, got {}", self.n_genes, self.n_regulators),
            );
        }
        if !(0.0..1.0).contains(&self.edge_density) {
            return fail("edge_density", format!("must be in [0, 1), got {}", self.edge_density));
        }
        if self.plates == 0 {
            return fail("plates", "must be positive".into());
        }
        if self.controls_per_plate < 2 {
            return fail(
                "controls_per_plate",
                format!("must be >= 2, got {}", self.controls_per_plate),
            );
        }
        if self.knockdowns_per_regulator < 3 {
            return fail(
                "knockdowns_per_regulator",
                format!("must be >= 3, got {}", self.knockdowns_per_regulator),
            );
        }
        if !(self.knockdown_strength < 0.0 && self.knockdown_strength.is_finite()) {
            return fail(
                "knockdown_strength",
                format!("must be negative, got {}", self.knockdown_strength),
            );
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return fail("noise_sd", format!("must be positive, got {}", self.noise_sd));
        }
        if !(self.plate_shift_sd >= 0.0 && self.plate_shift_sd.is_finite()) {
            return fail("plate_shift_sd", format!("must be >= 0, got {}", self.plate_shift_sd));
        }
        if !(0.0..1.0).contains(&self.efficacy_spread) {
            return fail(
                "efficacy_spread",
                format!("must be in [0, 1), got {}", self.efficacy_spread),
            );
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return fail("missing_rate", format!("must be in [0, 1), got {}", self.missing_rate));
        }
        Ok(())
    }

    pub fn gene_ids(&self) -> Vec<String> {
        let width = self.n_genes.to_string().len().max(3);
        (1..=self.n_genes).map(|i| format!("G{i:0width$}")).collect()
    }

    fn plate_ids(&self) -> Vec<String> {
        let width = self.plates.to_string().len().max(2);
        (1..=self.plates).map(|i| format!("P{i:0width$}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueEdge {
    pub regulator: String,
    pub target: String,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueNetwork {
    pub genes: Vec<String>,
    /// Genes that receive knockdown experiments.
    pub regulators: Vec<String>,
    pub edges: Vec<TrueEdge>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_network(config: &SimConfig) -> Result<TrueNetwork> {
    config.validate()?;
    let genes = config.gene_ids();
    let regulators = genes[..config.n_regulators].to_vec();
    let mut rng = stream_rng(config.seed, NETWORK_STREAM);
    let mut edges = Vec::new();
    for (h, reg) in regulators.iter().enumerate() {
        for (t, target) in genes.iter().enumerate() {
            if t == h {
                continue;
            }
            if rng.random::<f64>() < config.edge_density {
                let magnitude = rng.random_range(EFFECT_MIN..=EFFECT_MAX);
                let effect = if rng.random::<bool>() { magnitude } else { -magnitude };
                edges.push(TrueEdge {
                    regulator: reg.clone(),
                    target: target.clone(),
                    effect,
                });
            }
        }
    }
    Ok(TrueNetwork {
        genes,
        regulators,
        edges,
    })
}

/// Per-regulator outgoing effects by gene index.
fn effect_table(network: &TrueNetwork) -> Result<BTreeMap<usize, Vec<(usize, f64)>>> {
    let index: BTreeMap<&str, usize> = network.genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut out: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for e in &network.edges {
        let (Some(&h), Some(&t)) = (index.get(e.regulator.as_str()), index.get(e.target.as_str())) else {
            return Err(Error::validation(format!(
                "network edge {}->{} references an unknown gene",
                e.regulator, e.target
            )));
        };
        if h == t || !e.effect.is_finite() || e.effect == 0.0 {
            return Err(Error::validation(format!(
                "invalid network edge {}->{}",
                e.regulator, e.target
            )));
        }
        out.entry(h).or_default().push((t, e.effect));
    }
    Ok(out)
}

/// Z-unit shifts of every gene when regulator `h` is knocked down by `depth`.
fn knockdown_shifts(
    h: usize,
    depth: f64,
    n_genes: usize,
    effects: &BTreeMap<usize, Vec<(usize, f64)>>,
    indirect: bool,
) -> Vec<f64> {
    let mut shift = vec![0.0; n_genes];
    shift[h] = depth;
    if let Some(targets) = effects.get(&h) {
        for &(t, eff) in targets {
            shift[t] += eff * depth;
            if indirect {
                for &(u, eff2) in effects.get(&t).map(Vec::as_slice).unwrap_or_default() {
                    if u != h {
                        shift[u] += eff2 * eff * depth;
                    }
                }
            }
        }
    }
    shift
}

pub fn simulate_dataset(network: &TrueNetwork, config: &SimConfig) -> Result<ExpressionDataset> {
    config.validate()?;
    let genes = config.gene_ids();
    if network.genes != genes {
        return Err(Error::validation("network genes do not match the simulation config"));
    }
    let regulator_index: Vec<usize> = network
        .regulators
        .iter()
        .map(|r| {
            genes
                .iter()
                .position(|g| g == r)
                .ok_or_else(|| Error::validation(format!("regulator {r} is not a network gene")))
        })
        .collect::<Result<_>>()?;
    let effects = effect_table(network)?;
    let n_genes = genes.len();

    let mut mean_rng = stream_rng(config.seed, GENE_MEAN_STREAM);
    let gene_means: Vec<f64> = (0..n_genes)
        .map(|_| mean_rng.random_range(GENE_MEAN_RANGE.0..GENE_MEAN_RANGE.1))
        .collect();

    let plate_ids = config.plate_ids();
    let kpr = config.knockdowns_per_regulator;
    let mut row_ids = Vec::new();
    let mut meta = Vec::new();
    let mut values = Vec::new();

    for (p, plate) in plate_ids.iter().enumerate() {
        let mut rng = stream_rng(config.seed, FIRST_PLATE_STREAM + p as u64);
        let shift_dist = Normal::new(0.0, config.plate_shift_sd).map_err(|e| Error::validation(e.to_string()))?;
        let baseline: Vec<f64> = gene_means.iter().map(|m| m + shift_dist.sample(&mut rng)).collect();

        let mut emit =
            |rng: &mut ChaCha8Rng, id: String, kind, target: Option<String>, shift: Option<&[f64]>| -> Result<()> {
                for (g, base) in baseline.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(rng);
                    let s = shift.map_or(0.0, |s| s[g]);
                    let v = base + config.noise_sd * (z + s);
                    let missing = config.missing_rate > 0.0 && rng.random::<f64>() < config.missing_rate;
                    values.push((!missing).then_some(v));
                }
                meta.push(ExperimentMeta::new(id.clone(), plate.clone(), kind, target)?);
                row_ids.push(id);
                Ok(())
            };

        for c in 0..config.controls_per_plate {
            emit(
                &mut rng,
                format!("{plate}_C{:03}", c + 1),
                ExperimentKind::Control,
                None,
                None,
            )?;
        }
        let mut k = 0;
        for (r, &h) in regulator_index.iter().enumerate() {
            for j in 0..kpr {
                if (r * kpr + j) % config.plates != p {
                    continue;
                }
                let efficacy = 1.0 + config.efficacy_spread * rng.random_range(-1.0..=1.0);
                let depth = config.knockdown_strength * efficacy;
                let shifts = knockdown_shifts(h, depth, n_genes, &effects, config.propagate_indirect);
                k += 1;
                emit(
                    &mut rng,
                    format!("{plate}_K{k:03}"),
                    ExperimentKind::Knockdown,
                    Some(genes[h].clone()),
                    Some(&shifts),
                )?;
            }
        }
    }

    validate_dataset(
        ExpressionMatrix {
            gene_ids: genes,
            row_ids,
            values,
        },
        meta,
    )
}

pub fn write_truth<W: Write>(mut sink: W, network: &TrueNetwork) -> Result<()> {
    writeln!(sink, "regulator\ttarget\teffect")?;
    for e in &network.edges {
        writeln!(sink, "{}\t{}\t{}", e.regulator, e.target, format_real(e.effect))?;
    }
    sink.flush()?;
    Ok(())
}
