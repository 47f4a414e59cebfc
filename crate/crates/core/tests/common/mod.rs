//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;

use grn_posterior::baseline::{compute_plate_baselines, standardize};
use grn_posterior::inference::PairAccumulator;
use grn_posterior::ingest::{ExperimentKind, ExpressionDataset};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Trapezoid weights in log space for `points` equally spaced nodes.
fn log_trapezoid(log_f: &[f64], step: f64) -> f64 {
    let last = log_f.len() - 1;
    let weighted: Vec<f64> = log_f
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i == last { v - 2f64.ln() } else { *v })
        .collect();
    log_sum_exp(&weighted) + step.ln()
}

/// Log Bayes factor of `y = b0 + b1 x + e` against `y = b0 + e`, obtained by
/// numerical integration. Priors: flat on `b0`, `1/s2` on the noise variance,
/// and `b1 | s2 ~ N(0, g s2 / Sxx)` with `Sxx` the centered sum of squares.
/// The data enter through the centered sums, taken as `Sxx = Syy = 1` and
/// `Sxy = sqrt(r2)`. `b0` is integrated analytically; `b1` and `log s2` on
/// trapezoid grids.
pub fn log_bayes_factor_quadrature(n: usize, r2: f64, g: f64) -> f64 {
    let (sxx, syy, sxy) = (1.0, 1.0, r2.sqrt());
    let half = (n as f64 - 1.0) / 2.0;
    // Profile modes of both integrands in u = log s2 bound the outer grid.
    let resid1 = syy - g / (1.0 + g) * sxy * sxy / sxx;
    let mode_lo = (resid1 / (n as f64 - 1.0)).ln();
    let mode_hi = (syy / (n as f64 - 1.0)).ln();
    let u_min = mode_lo - 12.0;
    let u_max = mode_hi + 60.0 / half + 12.0 / half.sqrt();
    let nu = 3001;
    let du = (u_max - u_min) / (nu - 1) as f64;

    let nb = 241;
    let mut outer1 = Vec::with_capacity(nu);
    let mut outer0 = Vec::with_capacity(nu);
    let mut inner = vec![0.0; nb];
    for i in 0..nu {
        let u = u_min + du * i as f64;
        let s2 = u.exp();
        // Grid for b1 centered on its conditional posterior.
        let centre = g / (1.0 + g) * sxy / sxx;
        let sd = (s2 * g / ((1.0 + g) * sxx)).sqrt();
        let b_min = centre - 14.0 * sd;
        let db = 28.0 * sd / (nb - 1) as f64;
        let prior_var = g * s2 / sxx;
        for (j, slot) in inner.iter_mut().enumerate() {
            let b = b_min + db * j as f64;
            let sse = syy - 2.0 * b * sxy + b * b * sxx;
            let log_prior = -0.5 * (2.0 * std::f64::consts::PI * prior_var).ln() - b * b / (2.0 * prior_var);
            *slot = -half * u - sse / (2.0 * s2) + log_prior;
        }
        outer1.push(log_trapezoid(&inner, db));
        outer0.push(-half * u - syy / (2.0 * s2));
    }
    log_trapezoid(&outer1, du) - log_trapezoid(&outer0, du)
}

/// f64 value of a non-negative rational, from a 64-bit truncated quotient.
fn rational_to_f64(x: &BigRational) -> f64 {
    let num = x.numer().clone();
    let den = x.denom().clone();
    if num == BigInt::from(0) {
        return 0.0;
    }
    let shift = num.bits() as i64 - den.bits() as i64 - 64;
    let q = if shift >= 0 {
        num / (den << shift as usize)
    } else {
        (num << (-shift) as usize) / den
    };
    let (_, digits) = q.to_u64_digits();
    let mant = digits
        .iter()
        .rev()
        .fold(0f64, |acc, d| acc * 18446744073709551616.0 + *d as f64);
    mant * 2f64.powi(shift as i32)
}

/// `P(X >= k)` for `X ~ Binomial(trials, num/den)`, summed in exact rational
/// arithmetic.
pub fn binomial_tail_exact(k: usize, trials: usize, num: u64, den: u64) -> f64 {
    let p = BigRational::new(BigInt::from(num), BigInt::from(den));
    let q = BigRational::new(BigInt::from(den - num), BigInt::from(den));
    let mut total = BigRational::from_integer(BigInt::from(0));
    let mut choose = BigInt::from(1);
    for i in 0..=trials {
        if i > 0 {
            choose = choose * BigInt::from(trials - i + 1) / BigInt::from(i);
        }
        if i >= k {
            let term = BigRational::from_integer(choose.clone()) * pow(&p, i) * pow(&q, trials - i);
            total += term;
        }
    }
    rational_to_f64(&total)
}

fn pow(x: &BigRational, e: usize) -> BigRational {
    let mut out = BigRational::from_integer(BigInt::from(1));
    for _ in 0..e {
        out *= x;
    }
    out
}

/// Two-pass mean and sample SD.
pub fn two_pass_mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// R² of the least-squares fit `y ~ a + b x`, as 1 - SSE/SST from fitted
/// residuals.
pub fn ols_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    1.0 - sse / sst
}

pub fn relative_error(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

/// Per-regulator accumulators of (regulator z, target z) over the regulator's
/// knockdown experiments, keyed by (regulator, target).
pub fn knockdown_pairs(dataset: &ExpressionDataset) -> HashMap<(String, String), PairAccumulator> {
    let baselines = compute_plate_baselines(dataset).unwrap();
    let z = standardize(dataset, &baselines).unwrap();
    let genes = dataset.gene_ids();
    let mut out: HashMap<(String, String), PairAccumulator> = HashMap::new();
    for (i, meta) in z.experiments.iter().enumerate() {
        if meta.kind != ExperimentKind::Knockdown {
            continue;
        }
        let h = meta.target_gene.as_deref().unwrap();
        let hi = dataset.gene_position(h).unwrap();
        let row = z.row(i);
        for (t, gene) in genes.iter().enumerate() {
            if t == hi {
                continue;
            }
            if let (Some(x), Some(y)) = (row[hi], row[t]) {
                out.entry((h.to_owned(), gene.clone())).or_default().push(x, y).unwrap();
            }
        }
    }
    out
}

/// Merge `parts` pairwise in a random order until one remains.
pub fn merge_randomly<T>(mut parts: Vec<T>, rng: &mut impl rand::Rng, merge: impl Fn(T, T) -> T) -> T {
    while parts.len() > 1 {
        let i = rng.random_range(0..parts.len());
        let a = parts.swap_remove(i);
        let j = rng.random_range(0..parts.len());
        let b = parts.swap_remove(j);
        parts.push(merge(a, b));
    }
    parts.pop().unwrap()
}

/// Split `0..len` into randomly sized contiguous chunks, then shuffle them.
pub fn random_partition(len: usize, rng: &mut impl rand::Rng) -> Vec<std::ops::Range<usize>> {
    use rand::seq::SliceRandom;
    let mut cuts: Vec<usize> = (0..rng.random_range(0..=len.min(8)))
        .map(|_| rng.random_range(0..=len))
        .collect();
    cuts.push(0);
    cuts.push(len);
    cuts.sort_unstable();
    let mut parts: Vec<_> = cuts.windows(2).map(|w| w[0]..w[1]).collect();
    parts.shuffle(rng);
    parts
}

/// Largest relative deviations of streamed plate baselines and pair
/// accumulators from two-pass computations on one seeded fixture.
pub fn streaming_fidelity(seed: u64) -> (f64, f64) {
    use grn_posterior::baseline::BaselineBuilder;
    use grn_posterior::inference::rsquared;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n_genes = rng.random_range(1..10);
    let plates: Vec<String> = (0..rng.random_range(1..5)).map(|p| format!("P{p}")).collect();
    let mut rows: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for plate in &plates {
        let centre: Vec<f64> = (0..n_genes).map(|_| rng.random_range(4.0..12.0)).collect();
        for _ in 0..rng.random_range(2..40) {
            let row = centre.iter().map(|c| Some(c + rng.random_range(-1.5..1.5))).collect();
            rows.push((plate.clone(), row));
        }
    }
    let parts = random_partition(rows.len(), &mut rng);
    let builders: Vec<BaselineBuilder> = parts
        .into_iter()
        .map(|r| {
            let mut b = BaselineBuilder::new(n_genes);
            for (plate, row) in &rows[r] {
                b.observe_control(plate, row).unwrap();
            }
            b
        })
        .collect();
    let baselines = merge_randomly(builders, &mut rng, |a, b| a.merge(b).unwrap()).finish();
    let mut worst_baseline = 0f64;
    for plate in &plates {
        for g in 0..n_genes {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|(p, _)| p == plate)
                .map(|(_, r)| r[g].unwrap())
                .collect();
            let (mean, sd) = two_pass_mean_sd(&xs);
            let got = baselines[plate].genes[g];
            worst_baseline = worst_baseline
                .max(relative_error(got.mean, mean))
                .max(relative_error(got.sd, sd));
        }
    }

    let n = rng.random_range(3..300);
    let slope = rng.random_range(0.3..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let x = -5.0 * rng.random_range(0.25..1.75);
            (x, slope * x + rng.random_range(-1.0..1.0))
        })
        .collect();
    let accs: Vec<PairAccumulator> = random_partition(n, &mut rng)
        .into_iter()
        .map(|r| PairAccumulator::from_pairs(pairs[r].iter().copied()).unwrap())
        .collect();
    let acc = merge_randomly(accs, &mut rng, |a, b| a.merge(&b));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let cxy: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let cxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let cyy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let worst_pair = relative_error(acc.scaled_covariance(), nf * cxy)
        .max(relative_error(rsquared(&acc).unwrap(), cxy * cxy / (cxx * cyy)))
        .max(relative_error(acc.n as f64, nf));
    (worst_baseline, worst_pair)
}

/// Posterior differences after rescaling every (plate, gene) block of raw
/// values by a random positive affine map.
pub fn affine_invariance_max_diff(seed: u64) -> f64 {
    use grn_posterior::ingest::validate_dataset;
    use grn_posterior::pipeline::{infer_dataset, InferenceOptions};
    use grn_posterior::simgen::{generate_network, simulate_dataset, SimConfig};
    use rand::{Rng, SeedableRng};

    let config = SimConfig {
        seed,
        missing_rate: 0.02,
        ..SimConfig::default()
    };
    let dataset = simulate_dataset(&generate_network(&config).unwrap(), &config).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let mut maps: HashMap<(String, usize), (f64, f64)> = HashMap::new();
    let mut matrix = dataset.to_matrix();
    let n_genes = matrix.n_genes();
    for (i, meta) in dataset.experiments().iter().enumerate() {
        for g in 0..n_genes {
            let (a, b) = *maps
                .entry((meta.plate_id.clone(), g))
                .or_insert_with(|| (rng.random_range(0.1..20.0), rng.random_range(-50.0..50.0)));
            if let Some(v) = matrix.values[i * n_genes + g].as_mut() {
                *v = a * *v + b;
            }
        }
    }
    let rescaled = validate_dataset(matrix, dataset.experiments().to_vec()).unwrap();
    let options = InferenceOptions::default();
    let before = infer_dataset(&dataset, &options).unwrap().edges;
    let after = infer_dataset(&rescaled, &options).unwrap().edges;
    assert_eq!(before.len(), after.len());
    let after: HashMap<(&str, &str), f64> = after
        .iter()
        .map(|e| ((e.regulator.as_str(), e.target.as_str()), e.posterior))
        .collect();
    before
        .iter()
        .map(|e| (e.posterior - after[&(e.regulator.as_str(), e.target.as_str())]).abs())
        .fold(0.0, f64::max)
}

pub struct Recovery {
    pub auprc: f64,
    pub baseline: f64,
    /// True edges among the top ranked, and how many of them carry the
    /// planted sign.
    pub top_true: usize,
    pub top_sign_matches: usize,
}

/// End-to-end recovery of a simulated network: simulate, infer, then score
/// the ranking over the regulator x gene universe.
pub fn recovery(config: &grn_posterior::simgen::SimConfig, top: usize) -> Recovery {
    use grn_posterior::eval::{auprc, precision_recall_full, ReferenceStandard};
    use grn_posterior::pipeline::{infer_dataset, InferenceOptions};
    use grn_posterior::simgen::{generate_network, simulate_dataset};
    use std::collections::BTreeSet;

    let network = generate_network(config).unwrap();
    let dataset = simulate_dataset(&network, config).unwrap();
    let edges = infer_dataset(&dataset, &InferenceOptions::default()).unwrap().edges;
    let reference = ReferenceStandard::new(
        network.edges.iter().map(|e| (e.regulator.clone(), e.target.clone())),
        network.regulators.iter().cloned().collect(),
        network.genes.iter().cloned().collect::<BTreeSet<_>>(),
    )
    .unwrap();
    let curve = precision_recall_full(&edges, &reference).unwrap();
    let effects: HashMap<(&str, &str), f64> = network
        .edges
        .iter()
        .map(|e| ((e.regulator.as_str(), e.target.as_str()), e.effect))
        .collect();
    let pairs = knockdown_pairs(&dataset);
    let mut top_true = 0;
    let mut top_sign_matches = 0;
    for e in edges.iter().take(top) {
        if let Some(effect) = effects.get(&(e.regulator.as_str(), e.target.as_str())) {
            top_true += 1;
            let slope_sign = pairs[&(e.regulator.clone(), e.target.clone())]
                .scaled_covariance()
                .signum();
            if slope_sign == effect.signum() {
                top_sign_matches += 1;
            }
        }
    }
    Recovery {
        auprc: auprc(&curve),
        baseline: curve.baseline_precision,
        top_true,
        top_sign_matches,
    }
}
