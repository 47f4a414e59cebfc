//! Edge priors, canonical ranking, cutoffs and the edgelist TSV format.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::inference::{EdgeScore, PairScore};

/// Prior used throughout when nothing else is configured: an expected
/// sparse network with about one edge in two thousand candidate pairs.
pub const DEFAULT_EDGE_PRIOR: f64 = 0.0005;

pub const EDGELIST_HEADER: [&str; 8] = ["regulator", "target", "n", "r2", "g", "prior", "log_odds", "posterior"];
pub const PRIOR_TABLE_HEADER: [&str; 3] = ["regulator", "target", "prior"];

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Scalar(f64),
    Table {
        table: HashMap<(String, String), f64>,
        default: f64,
    },
}

fn check_probability(p: f64, what: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::validation(format!("{what} must lie in [0, 1], got {p}")))
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Scalar(DEFAULT_EDGE_PRIOR)
    }
}

impl PriorSpec {
    pub fn scalar(p: f64) -> Result<Self> {
        Ok(PriorSpec::Scalar(check_probability(p, "prior")?))
    }

    pub fn table(table: HashMap<(String, String), f64>, default: f64) -> Result<Self> {
        check_probability(default, "default prior")?;
        for ((h, t), p) in &table {
            check_probability(*p, &format!("prior for {h}->{t}"))?;
        }
        Ok(PriorSpec::Table { table, default })
    }

    /// Read a `regulator, target, prior` TSV; pairs not listed get `default`.
    pub fn read_table<R: BufRead>(source: R, default: f64) -> Result<Self> {
        let mut lines = source.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header
            .trim_end_matches('\r')
            .split('\t')
            .ne(PRIOR_TABLE_HEADER.iter().copied())
        {
            return Err(Error::Structure {
                line: 1,
                message: format!("prior table header must be {:?}", PRIOR_TABLE_HEADER.join("\t")),
            });
        }
        let mut table = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            let cells: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
            if cells.len() != 3 {
                return Err(Error::Structure {
                    line: line_no,
                    message: format!("expected 3 cells, found {}", cells.len()),
                });
            }
            let p: f64 = cells[2].parse().map_err(|_| Error::Parse {
                line: line_no,
                column: 3,
                message: format!("bad prior {:?}", cells[2]),
            })?;
            table.insert((cells[0].to_owned(), cells[1].to_owned()), p);
        }
        Self::table(table, default)
    }
}

pub fn resolve_prior(spec: &PriorSpec, regulator: &str, target: &str) -> f64 {
    match spec {
        PriorSpec::Scalar(p) => *p,
        PriorSpec::Table { table, default } => table
            // Tuple keys need owned strings for lookup.
            .get(&(regulator.to_owned(), target.to_owned()))
            .copied()
            .unwrap_or(*default),
    }
}

/// Total order used for every ranked list: posterior descending, then
/// regulator and target ascending.
pub fn canonical_order(a: &EdgeScore, b: &EdgeScore) -> Ordering {
    b.posterior
        .total_cmp(&a.posterior)
        .then_with(|| a.regulator.cmp(&b.regulator))
        .then_with(|| a.target.cmp(&b.target))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedEdgeList {
    pub edges: Vec<EdgeScore>,
    /// Pairs that could not be scored for lack of data.
    pub insufficient: usize,
}

impl RankedEdgeList {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EdgeScore> {
        self.edges.iter()
    }
}

pub fn rank_edges(scores: impl IntoIterator<Item = PairScore>) -> RankedEdgeList {
    let mut edges = Vec::new();
    let mut insufficient = 0;
    for s in scores {
        match s {
            PairScore::Scored(e) => edges.push(e),
            PairScore::Insufficient { .. } => insufficient += 1,
        }
    }
    edges.sort_by(canonical_order);
    RankedEdgeList { edges, insufficient }
}

/// Entries with posterior at or above `cutoff`; a prefix of a ranked list.
pub fn threshold(list: &RankedEdgeList, cutoff: f64) -> RankedEdgeList {
    RankedEdgeList {
        edges: list.edges.iter().filter(|e| e.posterior >= cutoff).cloned().collect(),
        insufficient: 0,
    }
}

/// 17 significant digits; infinities as `inf` / `-inf`.
pub fn format_real(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_owned()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_owned()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_edgelist<W: Write>(mut sink: W, list: &RankedEdgeList) -> Result<()> {
    writeln!(sink, "{}", EDGELIST_HEADER.join("\t"))?;
    for e in &list.edges {
        writeln!(
            sink,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.regulator,
            e.target,
            e.n,
            format_real(e.r2),
            format_real(e.g),
            format_real(e.prior),
            format_real(e.log_odds),
            format_real(e.posterior)
        )?;
    }
    sink.flush()?;
    Ok(())
}

/// Read an edgelist TSV, keeping the file's row order. Lists from other
/// tools are expected to arrive already ordered.
pub fn read_edgelist<R: BufRead>(source: R) -> Result<RankedEdgeList> {
    let mut lines = source.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header
        .trim_end_matches('\r')
        .split('\t')
        .ne(EDGELIST_HEADER.iter().copied())
    {
        return Err(Error::Structure {
            line: 1,
            message: format!("edgelist header must be {:?}", EDGELIST_HEADER.join("\t")),
        });
    }
    let mut edges = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let cells: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if cells.len() != EDGELIST_HEADER.len() {
            return Err(Error::Structure {
                line: line_no,
                message: format!("expected {} cells, found {}", EDGELIST_HEADER.len(), cells.len()),
            });
        }
        let real = |col: usize| -> Result<f64> {
            let v: f64 = cells[col].parse().map_err(|_| Error::Parse {
                line: line_no,
                column: col + 1,
                message: format!("bad number {:?}", cells[col]),
            })?;
            if v.is_nan() || (v.is_infinite() && col != 6) {
                return Err(Error::Parse {
                    line: line_no,
                    column: col + 1,
                    message: format!("non-finite value {:?}", cells[col]),
                });
            }
            Ok(v)
        };
        let n: usize = cells[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            column: 3,
            message: format!("bad count {:?}", cells[2]),
        })?;
        edges.push(EdgeScore {
            regulator: cells[0].to_owned(),
            target: cells[1].to_owned(),
            n,
            r2: real(3)?,
            g: real(4)?,
            prior: real(5)?,
            log_odds: real(6)?,
            posterior: real(7)?,
        });
    }
    Ok(RankedEdgeList { edges, insufficient: 0 })
}
