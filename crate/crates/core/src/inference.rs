//! Closed-form posterior edge probabilities under a g-prior simple regression.
//!
//! For a regulator `h` and target `t`, the target's z-scores are regressed on
//! the regulator's z-scores over the knockdown experiments of `h`. With
//! Zellner's g-prior on the slope and a flat prior on intercept and
//! log-variance, the posterior odds of an edge against no relationship are
//!
//! ```text
//! log T = log(pi / (1 - pi)) + (n - 2) log(1 + g) / 2 - (n - 1) log(1 + g (1 - R^2)) / 2
//! ```
//!
//! and the posterior edge probability is `T / (1 + T)`. Everything needed is
//! six running sums per pair, so a single pass over the experiments suffices.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::baseline::ZScoreMatrix;
use crate::error::{Error, Result};
use crate::ingest::ExperimentKind;

/// Smallest number of paired observations for which the data term is defined.
pub const MIN_PAIRED_OBSERVATIONS: usize = 3;

/// Relative threshold below which a centered sum of squares counts as zero.
const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Sufficient statistics for the regression of `y` (target) on `x` (regulator).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairAccumulator {
    pub n: u64,
    pub sx: f64,
    pub sy: f64,
    pub sxx: f64,
    pub syy: f64,
    pub sxy: f64,
}

impl PairAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut acc = Self::new();
        for (x, y) in pairs {
            acc.push(x, y)?;
        }
        Ok(acc)
    }

    pub fn push(&mut self, x: f64, y: f64) -> Result<()> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Numeric(format!("non-finite pair ({x}, {y})")));
        }
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
        Ok(())
    }

    pub fn merge(&self, other: &PairAccumulator) -> PairAccumulator {
        PairAccumulator {
            n: self.n + other.n,
            sx: self.sx + other.sx,
            sy: self.sy + other.sy,
            sxx: self.sxx + other.sxx,
            syy: self.syy + other.syy,
            sxy: self.sxy + other.sxy,
        }
    }

    /// `n * sxy - sx * sy`; same sign as the fitted slope.
    pub fn scaled_covariance(&self) -> f64 {
        self.n as f64 * self.sxy - self.sx * self.sy
    }
}

/// Coefficient of determination of the simple regression, clamped to [0, 1].
/// A constant regressor or constant target yields 0.
pub fn rsquared(acc: &PairAccumulator) -> Result<f64> {
    let n = acc.n as usize;
    if n < MIN_PAIRED_OBSERVATIONS {
        return Err(Error::InsufficientData {
            have: n,
            need: MIN_PAIRED_OBSERVATIONS,
        });
    }
    let nf = acc.n as f64;
    let vx = nf * acc.sxx - acc.sx * acc.sx;
    let vy = nf * acc.syy - acc.sy * acc.sy;
    if vx <= DEGENERATE_VARIANCE * nf * acc.sxx || vy <= DEGENERATE_VARIANCE * nf * acc.syy {
        return Ok(0.0);
    }
    let c = acc.scaled_covariance();
    let r2 = (c * c) / (vx * vy);
    Ok(r2.clamp(0.0, 1.0))
}

/// How the g-prior scale is chosen from the number of observations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GPolicy {
    #[default]
    SqrtN,
    UnitInformation,
    /// A fixed value, clamped into `[1, n]` when applied.
    Fixed(f64),
}

impl GPolicy {
    /// Validated fixed policy; values below 1 are rejected.
    pub fn fixed(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 1.0 {
            return Err(Error::validation(format!(
                "fixed g must be a finite value >= 1, got {value}"
            )));
        }
        Ok(GPolicy::Fixed(value))
    }
}

impl fmt::Display for GPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GPolicy::SqrtN => f.write_str("sqrt"),
            GPolicy::UnitInformation => f.write_str("unit"),
            GPolicy::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for GPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(GPolicy::SqrtN),
            "unit" => Ok(GPolicy::UnitInformation),
            _ => match s.strip_prefix("fixed:") {
                Some(v) => {
                    let value: f64 = v
                        .parse()
                        .map_err(|_| Error::validation(format!("bad fixed g value {v:?}")))?;
                    GPolicy::fixed(value)
                }
                None => Err(Error::validation(format!(
                    "unknown g policy {s:?} (expected sqrt, unit or fixed:<v>)"
                ))),
            },
        }
    }
}

/// The g-prior scale for `n` observations; always within `[1, n]`.
pub fn choose_g(n: usize, policy: GPolicy) -> f64 {
    let nf = n as f64;
    match policy {
        GPolicy::SqrtN => nf.sqrt(),
        GPolicy::UnitInformation => nf,
        GPolicy::Fixed(v) => v.clamp(1.0, nf.max(1.0)),
    }
}

/// Log posterior odds of an edge, computed in log space. A prior of 0 or 1
/// gives -inf or +inf regardless of the data.
pub fn log_posterior_odds(r2: f64, n: usize, g: f64, prior: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r2) {
        return Err(Error::domain(format!("R^2 must lie in [0, 1], got {r2}")));
    }
    if n < MIN_PAIRED_OBSERVATIONS {
        return Err(Error::domain(format!("need n >= {MIN_PAIRED_OBSERVATIONS}, got {n}")));
    }
    if !g.is_finite() || g < 1.0 {
        return Err(Error::domain(format!("g must be finite and >= 1, got {g}")));
    }
    if !(0.0..=1.0).contains(&prior) {
        return Err(Error::domain(format!("prior must lie in [0, 1], got {prior}")));
    }
    if prior == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if prior == 1.0 {
        return Ok(f64::INFINITY);
    }
    let log_prior_odds = prior.ln() - (-prior).ln_1p();
    let nf = n as f64;
    let data = 0.5 * ((nf - 2.0) * g.ln_1p() - (nf - 1.0) * (g * (1.0 - r2)).ln_1p());
    Ok(log_prior_odds + data)
}

/// Logistic function, evaluated without overflow for any input.
pub fn posterior_probability(log_odds: f64) -> f64 {
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringParams {
    pub policy: GPolicy,
    pub min_experiments: usize,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            policy: GPolicy::SqrtN,
            min_experiments: MIN_PAIRED_OBSERVATIONS,
        }
    }
}

impl ScoringParams {
    pub fn new(policy: GPolicy, min_experiments: usize) -> Result<Self> {
        if min_experiments < MIN_PAIRED_OBSERVATIONS {
            return Err(Error::validation(format!(
                "min_experiments must be at least {MIN_PAIRED_OBSERVATIONS}, got {min_experiments}"
            )));
        }
        Ok(ScoringParams {
            policy,
            min_experiments,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScore {
    pub regulator: String,
    pub target: String,
    pub n: usize,
    pub r2: f64,
    pub g: f64,
    pub prior: f64,
    pub log_odds: f64,
    pub posterior: f64,
}

/// Outcome of scoring one regulator-target pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PairScore {
    Scored(EdgeScore),
    Insufficient {
        regulator: String,
        target: String,
        n: usize,
    },
}

impl PairScore {
    pub fn scored(&self) -> Option<&EdgeScore> {
        match self {
            PairScore::Scored(s) => Some(s),
            PairScore::Insufficient { .. } => None,
        }
    }

    pub fn into_scored(self) -> Option<EdgeScore> {
        match self {
            PairScore::Scored(s) => Some(s),
            PairScore::Insufficient { .. } => None,
        }
    }
}

/// Score a pair from its accumulated statistics.
pub fn score_accumulator(
    regulator: &str,
    target: &str,
    acc: &PairAccumulator,
    prior: f64,
    params: &ScoringParams,
) -> Result<PairScore> {
    let n = acc.n as usize;
    if n < params.min_experiments.max(MIN_PAIRED_OBSERVATIONS) {
        return Ok(PairScore::Insufficient {
            regulator: regulator.to_owned(),
            target: target.to_owned(),
            n,
        });
    }
    let r2 = rsquared(acc)?;
    let g = choose_g(n, params.policy);
    let log_odds = log_posterior_odds(r2, n, g, prior)?;
    Ok(PairScore::Scored(EdgeScore {
        regulator: regulator.to_owned(),
        target: target.to_owned(),
        n,
        r2,
        g,
        prior,
        log_odds,
        posterior: posterior_probability(log_odds),
    }))
}

/// Score one pair from aligned z-score vectors, dropping positions where
/// either value is missing.
pub fn score_pair(
    regulator: &str,
    target: &str,
    zx: &[Option<f64>],
    zy: &[Option<f64>],
    prior: f64,
    params: &ScoringParams,
) -> Result<PairScore> {
    if zx.len() != zy.len() {
        return Err(Error::validation(format!(
            "regressor and target vectors differ in length ({} vs {})",
            zx.len(),
            zy.len()
        )));
    }
    let acc = PairAccumulator::from_pairs(zx.iter().zip(zy).filter_map(|(x, y)| Some(((*x)?, (*y)?))))?;
    score_accumulator(regulator, target, &acc, prior, params)
}

/// Accumulators for one regulator against every gene, fed one z-score row at
/// a time. Rows where the regulator's own z-score is missing are skipped.
#[derive(Debug, Clone)]
pub struct RegulatorAccumulator {
    regulator: usize,
    pairs: Vec<PairAccumulator>,
    rows: usize,
    skipped_rows: usize,
}

impl RegulatorAccumulator {
    pub fn new(regulator: usize, n_genes: usize) -> Self {
        RegulatorAccumulator {
            regulator,
            pairs: vec![PairAccumulator::new(); n_genes],
            rows: 0,
            skipped_rows: 0,
        }
    }

    pub fn regulator(&self) -> usize {
        self.regulator
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn skipped_rows(&self) -> usize {
        self.skipped_rows
    }

    pub fn pairs(&self) -> &[PairAccumulator] {
        &self.pairs
    }

    pub fn observe(&mut self, z_row: &[Option<f64>]) -> Result<()> {
        if z_row.len() != self.pairs.len() {
            return Err(Error::Consistency(format!(
                "z-score row has {} values, expected {}",
                z_row.len(),
                self.pairs.len()
            )));
        }
        self.rows += 1;
        let Some(x) = z_row[self.regulator] else {
            self.skipped_rows += 1;
            return Ok(());
        };
        for (t, (acc, y)) in self.pairs.iter_mut().zip(z_row).enumerate() {
            if t == self.regulator {
                continue;
            }
            if let Some(y) = y {
                acc.push(x, *y)?;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &RegulatorAccumulator) -> Result<()> {
        if other.regulator != self.regulator || other.pairs.len() != self.pairs.len() {
            return Err(Error::Consistency(
                "merging accumulators of different regulators".into(),
            ));
        }
        for (a, b) in self.pairs.iter_mut().zip(&other.pairs) {
            *a = a.merge(b);
        }
        self.rows += other.rows;
        self.skipped_rows += other.skipped_rows;
        Ok(())
    }

    /// One result per target gene other than the regulator, in gene order.
    pub fn finish<F>(&self, gene_ids: &[String], prior: F, params: &ScoringParams) -> Result<Vec<PairScore>>
    where
        F: Fn(&str, &str) -> f64,
    {
        let h = &gene_ids[self.regulator];
        self.pairs
            .iter()
            .enumerate()
            .filter(|(t, _)| *t != self.regulator)
            .map(|(t, acc)| {
                let target = &gene_ids[t];
                score_accumulator(h, target, acc, prior(h, target), params)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorScores {
    pub regulator: String,
    pub experiments: usize,
    pub scores: Vec<PairScore>,
    pub diagnostic: Option<String>,
}

/// Score regulator `h` against every other gene using the knockdown rows of
/// `zmatrix` that target `h`, in a single pass over those rows.
pub fn score_regulator<F>(h: &str, zmatrix: &ZScoreMatrix, prior: F, params: &ScoringParams) -> Result<RegulatorScores>
where
    F: Fn(&str, &str) -> f64,
{
    let Some(hi) = zmatrix.gene_position(h) else {
        return Ok(RegulatorScores {
            regulator: h.to_owned(),
            experiments: 0,
            scores: Vec::new(),
            diagnostic: Some(format!("regulator {h} is not a measured gene")),
        });
    };
    let mut acc = RegulatorAccumulator::new(hi, zmatrix.n_genes());
    for (i, meta) in zmatrix.experiments.iter().enumerate() {
        if meta.kind == ExperimentKind::Knockdown && meta.target_gene.as_deref() == Some(h) {
            acc.observe(zmatrix.row(i))?;
        }
    }
    if acc.rows() == acc.skipped_rows() {
        return Ok(RegulatorScores {
            regulator: h.to_owned(),
            experiments: acc.rows(),
            scores: Vec::new(),
            diagnostic: Some(format!("no usable knockdown experiments for {h}")),
        });
    }
    Ok(RegulatorScores {
        regulator: h.to_owned(),
        experiments: acc.rows(),
        scores: acc.finish(&zmatrix.gene_ids, prior, params)?,
        diagnostic: None,
    })
}

fn class_accumulators(
    control: &[Option<f64>],
    perturbed: &[Option<f64>],
) -> Result<(PairAccumulator, PairAccumulator)> {
    let c = PairAccumulator::from_pairs(control.iter().flatten().map(|y| (0.0, *y)))?;
    let p = PairAccumulator::from_pairs(perturbed.iter().flatten().map(|y| (1.0, *y)))?;
    Ok((c, p))
}

/// Two-class model: regress the target on a 0/1 indicator of
/// perturbed (1) versus control (0). Missing values are dropped.
pub fn two_class_score(
    label: &str,
    target: &str,
    control_values: &[Option<f64>],
    perturbed_values: &[Option<f64>],
    prior: f64,
    params: &ScoringParams,
) -> Result<PairScore> {
    let (c, p) = class_accumulators(control_values, perturbed_values)?;
    if c.n == 0 || p.n == 0 {
        return Err(Error::InsufficientData {
            have: c.n.min(p.n) as usize,
            need: 1,
        });
    }
    score_accumulator(label, target, &c.merge(&p), prior, params)
}

/// Streaming form of the two-class model for many perturbation groups.
#[derive(Debug, Clone)]
pub struct TwoClassAccumulator {
    controls: Vec<PairAccumulator>,
    groups: BTreeMap<String, Vec<PairAccumulator>>,
}

impl TwoClassAccumulator {
    pub fn new(n_genes: usize) -> Self {
        TwoClassAccumulator {
            controls: vec![PairAccumulator::new(); n_genes],
            groups: BTreeMap::new(),
        }
    }

    fn push_row(accs: &mut [PairAccumulator], x: f64, row: &[Option<f64>]) -> Result<()> {
        if row.len() != accs.len() {
            return Err(Error::Consistency(format!(
                "z-score row has {} values, expected {}",
                row.len(),
                accs.len()
            )));
        }
        for (acc, y) in accs.iter_mut().zip(row) {
            if let Some(y) = y {
                acc.push(x, *y)?;
            }
        }
        Ok(())
    }

    pub fn observe_control(&mut self, z_row: &[Option<f64>]) -> Result<()> {
        Self::push_row(&mut self.controls, 0.0, z_row)
    }

    pub fn observe_perturbed(&mut self, label: &str, z_row: &[Option<f64>]) -> Result<()> {
        let n = self.controls.len();
        let accs = self
            .groups
            .entry(label.to_owned())
            .or_insert_with(|| vec![PairAccumulator::new(); n]);
        Self::push_row(accs, 1.0, z_row)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    /// Scores for every group against every gene except a gene named like the
    /// group label. Pairs with an empty class are reported as insufficient.
    pub fn finish<F>(&self, gene_ids: &[String], prior: F, params: &ScoringParams) -> Result<Vec<PairScore>>
    where
        F: Fn(&str, &str) -> f64,
    {
        let mut out = Vec::new();
        for (label, accs) in &self.groups {
            for ((target, c), p) in gene_ids.iter().zip(&self.controls).zip(accs) {
                if target == label {
                    continue;
                }
                if c.n == 0 || p.n == 0 {
                    out.push(PairScore::Insufficient {
                        regulator: label.clone(),
                        target: target.clone(),
                        n: (c.n + p.n) as usize,
                    });
                    continue;
                }
                out.push(score_accumulator(
                    label,
                    target,
                    &c.merge(p),
                    prior(label, target),
                    params,
                )?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accumulate_single_pair() {
        let acc = PairAccumulator::from_pairs([(1.0, 2.0)]).unwrap();
        assert_eq!(
            acc,
            PairAccumulator {
                n: 1,
                sx: 1.0,
                sy: 2.0,
                sxx: 1.0,
                syy: 4.0,
                sxy: 2.0
            }
        );
        assert!(PairAccumulator::new().push(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn zeros_are_absorbed() {
        let acc = PairAccumulator::from_pairs(std::iter::repeat_n((0.0, 0.0), 7)).unwrap();
        assert_eq!(
            acc,
            PairAccumulator {
                n: 7,
                ..Default::default()
            }
        );
    }

    #[test]
    fn rsquared_cases() {
        let perfect = PairAccumulator::from_pairs([(-1.0, -1.0), (0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(rsquared(&perfect).unwrap(), 1.0);
        let flat = PairAccumulator::from_pairs((0..5).map(|i| (i as f64, 3.0))).unwrap();
        assert_eq!(rsquared(&flat).unwrap(), 0.0);
        let flat_x = PairAccumulator::from_pairs((0..5).map(|i| (0.1, i as f64))).unwrap();
        assert_eq!(rsquared(&flat_x).unwrap(), 0.0);
        let two = PairAccumulator::from_pairs([(0.0, 1.0), (1.0, 0.0)]).unwrap();
        assert!(matches!(
            rsquared(&two),
            Err(Error::InsufficientData { have: 2, need: 3 })
        ));
    }

    #[test]
    fn g_choices() {
        assert_eq!(choose_g(16, GPolicy::SqrtN), 4.0);
        assert_eq!(choose_g(9, GPolicy::UnitInformation), 9.0);
        assert_eq!(choose_g(10, GPolicy::Fixed(0.5)), 1.0);
        assert_eq!(choose_g(10, GPolicy::Fixed(25.0)), 10.0);
        assert_eq!(choose_g(10, GPolicy::Fixed(2.5)), 2.5);
    }

    #[test]
    fn g_policy_tokens() {
        assert_eq!("sqrt".parse::<GPolicy>().unwrap(), GPolicy::SqrtN);
        assert_eq!("unit".parse::<GPolicy>().unwrap(), GPolicy::UnitInformation);
        assert_eq!("fixed:2.5".parse::<GPolicy>().unwrap(), GPolicy::Fixed(2.5));
        assert!("fixed:0.5".parse::<GPolicy>().is_err());
        assert!("fixed:x".parse::<GPolicy>().is_err());
        assert!("bic".parse::<GPolicy>().is_err());
        for p in [GPolicy::SqrtN, GPolicy::UnitInformation, GPolicy::Fixed(3.0)] {
            assert_eq!(p.to_string().parse::<GPolicy>().unwrap(), p);
        }
    }

    #[test]
    fn log_odds_spot_values() {
        let a = log_posterior_odds(0.0, 10, 3.0, 0.5).unwrap();
        assert!((a + 4f64.ln() / 2.0).abs() < 1e-12);
        let b = log_posterior_odds(1.0, 5, 4.0, 0.5).unwrap();
        assert!((b - 1.5 * 5f64.ln()).abs() < 1e-12);
        assert_eq!(log_posterior_odds(0.3, 10, 3.0, 0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_posterior_odds(0.3, 10, 3.0, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn log_odds_domain() {
        assert!(log_posterior_odds(1.1, 10, 3.0, 0.5).is_err());
        assert!(log_posterior_odds(f64::NAN, 10, 3.0, 0.5).is_err());
        assert!(log_posterior_odds(0.5, 2, 1.0, 0.5).is_err());
        assert!(log_posterior_odds(0.5, 10, 0.9, 0.5).is_err());
        assert!(log_posterior_odds(0.5, 10, 2.0, -0.1).is_err());
    }

    #[test]
    fn logistic_values() {
        assert_eq!(posterior_probability(0.0), 0.5);
        assert!((posterior_probability(0.5f64.ln()) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(posterior_probability(f64::INFINITY), 1.0);
        assert_eq!(posterior_probability(f64::NEG_INFINITY), 0.0);
        for x in [-1e6, -800.0, 800.0, 1e6] {
            let p = posterior_probability(x);
            assert!(p.is_finite() && (0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn identical_vectors_compose() {
        let z: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64 * 0.3 - 1.0)).collect();
        let s = score_pair("A", "B", &z, &z, 0.5, &ScoringParams::default()).unwrap();
        let s = s.scored().unwrap();
        assert_eq!(s.r2, 1.0);
        assert_eq!(s.n, 10);
        let expected = posterior_probability(8.0 * (1.0 + 10f64.sqrt()).ln() / 2.0);
        assert!((s.posterior - expected).abs() < 1e-12);
    }

    #[test]
    fn pairwise_deletion_counts() {
        let mut zx: Vec<Option<f64>> = (0..12).map(|i| Some(i as f64)).collect();
        let mut zy: Vec<Option<f64>> = (0..12).map(|i| Some((i * i) as f64)).collect();
        zx[0] = None;
        zx[5] = None;
        zy[7] = None;
        zy[11] = None;
        let s = score_pair("A", "B", &zx, &zy, 0.1, &ScoringParams::default()).unwrap();
        assert_eq!(s.scored().unwrap().n, 8);

        let short = score_pair("A", "B", &zx[..3], &zy[..3], 0.1, &ScoringParams::default()).unwrap();
        assert_eq!(
            short,
            PairScore::Insufficient {
                regulator: "A".into(),
                target: "B".into(),
                n: 2
            }
        );
        assert!(score_pair("A", "B", &zx, &zy[..3], 0.1, &ScoringParams::default()).is_err());
    }

    #[test]
    fn two_class_degenerate_and_separated() {
        let p = ScoringParams::default();
        let same = two_class_score("D", "T", &[Some(2.0); 3], &[Some(2.0); 3], 0.2, &p).unwrap();
        let same = same.scored().unwrap();
        assert_eq!(same.r2, 0.0);
        assert!(same.posterior < 0.2);
        let sep = two_class_score("D", "T", &[Some(0.0); 3], &[Some(5.0); 3], 0.2, &p).unwrap();
        assert_eq!(sep.scored().unwrap().r2, 1.0);
        assert!(matches!(
            two_class_score("D", "T", &[None, None], &[Some(1.0); 3], 0.2, &p),
            Err(Error::InsufficientData { .. })
        ));
    }

    proptest! {
        #[test]
        fn accumulator_invariants(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..60)) {
            let acc = PairAccumulator::from_pairs(pairs.iter().copied()).unwrap();
            let n = acc.n as f64;
            prop_assert!(acc.sxx >= acc.sx * acc.sx / n - 1e-9 * acc.sxx.max(1.0));
            prop_assert!(acc.syy >= acc.sy * acc.sy / n - 1e-9 * acc.syy.max(1.0));
            if pairs.len() >= 3 {
                let r2 = rsquared(&acc).unwrap();
                prop_assert!((0.0..=1.0).contains(&r2));
            }
        }

        #[test]
        fn posterior_is_logistic_of_log_odds(
            r2 in 0.0f64..=1.0, n in 3usize..500, prior in 0.0f64..=1.0,
        ) {
            let g = choose_g(n, GPolicy::SqrtN);
            let lo = log_posterior_odds(r2, n, g, prior).unwrap();
            let p = posterior_probability(lo);
            prop_assert!((0.0..=1.0).contains(&p));
            if lo.is_finite() {
                let direct = 1.0 / (1.0 + (-lo).exp());
                prop_assert!((p - direct).abs() <= 1e-12);
            }
        }

        #[test]
        fn score_pair_order_invariant(
            pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 5..40),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(f64, f64)]| -> (Vec<Option<f64>>, Vec<Option<f64>>) {
                v.iter().map(|(x, y)| (Some(*x), Some(*y))).unzip()
            };
            let (x1, y1) = split(&pairs);
            let (x2, y2) = split(&shuffled);
            let p = ScoringParams::default();
            let a = score_pair("A", "B", &x1, &y1, 0.3, &p).unwrap().into_scored().unwrap();
            let b = score_pair("A", "B", &x2, &y2, 0.3, &p).unwrap().into_scored().unwrap();
            prop_assert!((a.r2 - b.r2).abs() < 1e-9);
            prop_assert!((a.posterior - b.posterior).abs() < 1e-9);
        }
    }
}
