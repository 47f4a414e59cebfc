//! Assessment of ranked edge lists against a reference set of known edges.
//!
//! The evaluation universe is every (regulator, target) pair with the
//! regulator drawn from the reference regulators, the target from the
//! reference targets, and the two distinct.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use crate::edgelist::{format_real, RankedEdgeList};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStandard {
    true_edges: HashSet<(String, String)>,
    regulators: BTreeSet<String>,
    targets: BTreeSet<String>,
}

impl ReferenceStandard {
    pub fn new(
        true_edges: impl IntoIterator<Item = (String, String)>,
        regulators: BTreeSet<String>,
        targets: BTreeSet<String>,
    ) -> Result<Self> {
        let true_edges: HashSet<(String, String)> = true_edges.into_iter().collect();
        for (h, t) in &true_edges {
            if h == t {
                return Err(Error::validation(format!("self-edge {h}->{t} in reference")));
            }
            if !regulators.contains(h) || !targets.contains(t) {
                return Err(Error::validation(format!(
                    "reference edge {h}->{t} lies outside the universe"
                )));
            }
        }
        Ok(ReferenceStandard {
            true_edges,
            regulators,
            targets,
        })
    }

    pub fn regulators(&self) -> &BTreeSet<String> {
        &self.regulators
    }

    pub fn targets(&self) -> &BTreeSet<String> {
        &self.targets
    }

    pub fn true_edge_count(&self) -> usize {
        self.true_edges.len()
    }

    pub fn is_true_edge(&self, regulator: &str, target: &str) -> bool {
        // HashSet<(String, String)> cannot be queried with borrowed pairs.
        self.true_edges.contains(&(regulator.to_owned(), target.to_owned()))
    }

    pub fn in_universe(&self, regulator: &str, target: &str) -> bool {
        regulator != target && self.regulators.contains(regulator) && self.targets.contains(target)
    }

    pub fn universe_size(&self) -> usize {
        let overlap = self.regulators.intersection(&self.targets).count();
        self.regulators.len() * self.targets.len() - overlap
    }

    /// Fraction of universe pairs that are true edges: the precision of a
    /// random ranking.
    pub fn baseline_precision(&self) -> f64 {
        self.true_edge_count() as f64 / self.universe_size() as f64
    }

    /// Universe pairs in (regulator, target) order.
    pub fn universe_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.regulators.iter().flat_map(move |h| {
            self.targets
                .iter()
                .filter(move |t| *t != h)
                .map(move |t| (h.as_str(), t.as_str()))
        })
    }
}

/// Optional universe overrides for [`load_reference`].
#[derive(Debug, Clone, Default)]
pub struct ReferenceOptions {
    pub regulators: Option<BTreeSet<String>>,
    pub targets: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone)]
pub struct LoadedReference {
    pub reference: ReferenceStandard,
    pub duplicates: usize,
    /// Edges dropped because an override excluded their regulator or target.
    pub outside_universe: usize,
}

/// Read a reference TSV whose first two columns are `regulator` and
/// `target`. Further columns are ignored.
pub fn load_reference<R: BufRead>(source: R, options: &ReferenceOptions) -> Result<LoadedReference> {
    let mut lines = source.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let mut head = header.trim_end_matches('\r').split('\t');
    if head.next() != Some("regulator") || head.next() != Some("target") {
        return Err(Error::Structure {
            line: 1,
            message: "reference header must start with \"regulator\\ttarget\"".into(),
        });
    }
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicates = 0;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let mut cells = line.trim_end_matches('\r').split('\t');
        let (Some(h), Some(t)) = (cells.next(), cells.next()) else {
            return Err(Error::Structure {
                line: line_no,
                message: "expected at least 2 cells".into(),
            });
        };
        if h.is_empty() || t.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                column: if h.is_empty() { 1 } else { 2 },
                message: "empty gene id".into(),
            });
        }
        if h == t {
            return Err(Error::validation(format!("line {line_no}: self-edge {h}->{t}")));
        }
        let pair = (h.to_owned(), t.to_owned());
        if seen.insert(pair.clone()) {
            edges.push(pair);
        } else {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("reference: {duplicates} duplicate rows ignored");
    }
    let regulators = options
        .regulators
        .clone()
        .unwrap_or_else(|| edges.iter().map(|(h, _)| h.clone()).collect());
    let targets = options
        .targets
        .clone()
        .unwrap_or_else(|| edges.iter().map(|(_, t)| t.clone()).collect());
    let before = edges.len();
    edges.retain(|(h, t)| regulators.contains(h) && targets.contains(t));
    let outside_universe = before - edges.len();
    Ok(LoadedReference {
        reference: ReferenceStandard::new(edges, regulators, targets)?,
        duplicates,
        outside_universe,
    })
}

/// Keep list entries inside the reference universe, preserving order. A pair
/// appearing more than once keeps only its first occurrence.
pub fn restrict_universe(list: &RankedEdgeList, reference: &ReferenceStandard) -> RankedEdgeList {
    let mut seen = HashSet::new();
    let edges: Vec<_> = list
        .iter()
        .filter(|e| reference.in_universe(&e.regulator, &e.target))
        .filter(|e| seen.insert((e.regulator.as_str(), e.target.as_str())))
        .cloned()
        .collect();
    if edges.is_empty() {
        log::warn!("no listed edge falls inside the reference universe");
    }
    RankedEdgeList { edges, insufficient: 0 }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionTable {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionTable {
    pub fn predicted(&self) -> usize {
        self.tp + self.fp
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Predicted positives are restricted-list entries with posterior at or
/// above `cutoff`; everything else in the universe is predicted negative.
pub fn confusion_at_cutoff(list: &RankedEdgeList, reference: &ReferenceStandard, cutoff: f64) -> ConfusionTable {
    let mut tp = 0;
    let mut fp = 0;
    for e in list.iter().filter(|e| e.posterior >= cutoff) {
        if !reference.in_universe(&e.regulator, &e.target) {
            continue;
        }
        if reference.is_true_edge(&e.regulator, &e.target) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let positives = reference.true_edge_count();
    let fn_ = positives - tp;
    let tn = reference.universe_size() - positives - fp;
    ConfusionTable { tp, fp, fn_, tn }
}

/// `P(X >= successes)` for `X ~ Binomial(trials, p)`, summed exactly over
/// log-space terms.
///
/// Terms are built by the ratio recurrence outward from the mode and
/// normalized by their own total, so no log-gamma evaluation is needed.
pub fn binomial_tail_pvalue(successes: usize, trials: usize, p: f64) -> f64 {
    assert!(successes <= trials, "successes {successes} exceed trials {trials}");
    assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
    if successes == 0 {
        return 1.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let n = trials;
    let log_ratio = p.ln() - (-p).ln_1p();
    let mode = (((n + 1) as f64 * p).floor() as usize).min(n);
    let mut log_w = vec![0.0f64; n + 1];
    for k in mode..n {
        log_w[k + 1] = log_w[k] + ((n - k) as f64).ln() - ((k + 1) as f64).ln() + log_ratio;
    }
    for k in (1..=mode).rev() {
        log_w[k - 1] = log_w[k] - ((n - k + 1) as f64).ln() + (k as f64).ln() - log_ratio;
    }
    let log_total = log_sum_exp(&log_w);
    let log_tail = log_sum_exp(&log_w[successes..]);
    (log_tail - log_total).exp().min(1.0)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub rank: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub baseline_precision: f64,
}

fn curve_from_hits(hits: impl Iterator<Item = bool>, reference: &ReferenceStandard) -> Result<PrCurve> {
    let total = reference.true_edge_count();
    if total == 0 {
        return Err(Error::validation("reference has no true edges; recall is undefined"));
    }
    let mut tp = 0usize;
    let points = hits
        .enumerate()
        .map(|(i, hit)| {
            tp += usize::from(hit);
            let rank = i + 1;
            PrPoint {
                rank,
                precision: tp as f64 / rank as f64,
                recall: tp as f64 / total as f64,
            }
        })
        .collect();
    Ok(PrCurve {
        points,
        baseline_precision: reference.baseline_precision(),
    })
}

/// One point per rank of the (restricted) list.
pub fn precision_recall(list: &RankedEdgeList, reference: &ReferenceStandard) -> Result<PrCurve> {
    curve_from_hits(
        list.iter().map(|e| reference.is_true_edge(&e.regulator, &e.target)),
        reference,
    )
}

/// Like [`precision_recall`], then continues through the universe pairs the
/// list does not contain, in (regulator, target) order, so the curve ends at
/// recall 1.
pub fn precision_recall_full(list: &RankedEdgeList, reference: &ReferenceStandard) -> Result<PrCurve> {
    let listed: HashSet<(&str, &str)> = list.iter().map(|e| (e.regulator.as_str(), e.target.as_str())).collect();
    let ranked = list.iter().map(|e| (e.regulator.as_str(), e.target.as_str()));
    let unranked = reference.universe_pairs().filter(|p| !listed.contains(p));
    curve_from_hits(
        ranked.chain(unranked).map(|(h, t)| reference.is_true_edge(h, t)),
        reference,
    )
}

/// Trapezoidal area under precision as a function of recall, over the ranks
/// where recall increases. The curve is anchored at recall 0 with the
/// precision of its first such rank.
pub fn auprc(curve: &PrCurve) -> f64 {
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut last_recall = 0.0;
    for p in &curve.points {
        if p.recall <= last_recall {
            continue;
        }
        let (r0, p0) = prev.unwrap_or((0.0, p.precision));
        area += (p.recall - r0) * (p.precision + p0) / 2.0;
        prev = Some((p.recall, p.precision));
        last_recall = p.recall;
    }
    area
}

pub fn write_curve<W: Write>(mut sink: W, curve: &PrCurve) -> Result<()> {
    writeln!(sink, "# baseline_precision={}", format_real(curve.baseline_precision))?;
    writeln!(sink, "rank\tprecision\trecall")?;
    for p in &curve.points {
        writeln!(
            sink,
            "{}\t{}\t{}",
            p.rank,
            format_real(p.precision),
            format_real(p.recall)
        )?;
    }
    sink.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffAssessment {
    pub cutoff: f64,
    pub table: ConfusionTable,
    pub pvalue: f64,
}

/// Confusion table and binomial tail p-value at each cutoff. The success
/// probability is the baseline precision of the universe.
pub fn assess_cutoffs(list: &RankedEdgeList, reference: &ReferenceStandard, cutoffs: &[f64]) -> Vec<CutoffAssessment> {
    let p0 = reference.baseline_precision();
    cutoffs
        .iter()
        .map(|&cutoff| {
            let table = confusion_at_cutoff(list, reference, cutoff);
            CutoffAssessment {
                cutoff,
                table,
                pvalue: binomial_tail_pvalue(table.tp, table.predicted(), p0),
            }
        })
        .collect()
}

pub fn write_confusion_report<W: Write>(mut sink: W, rows: &[CutoffAssessment]) -> Result<()> {
    writeln!(sink, "cutoff\ttp\tfp\tfn\ttn\tpvalue")?;
    for r in rows {
        writeln!(
            sink,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.cutoff,
            r.table.tp,
            r.table.fp,
            r.table.fn_,
            r.table.tn,
            format_real(r.pvalue)
        )?;
    }
    sink.flush()?;
    Ok(())
}
