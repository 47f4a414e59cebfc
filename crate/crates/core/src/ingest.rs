//! Expression matrix and experiment metadata readers.
//!
//! Expression files are wide TSV: a header `experiment_id<TAB>gene...` followed
//! by one row per experiment. Cells are decimal numbers (scientific notation
//! allowed) or the literal `NA`. Metadata files carry one experiment per row
//! with the header `experiment_id<TAB>plate_id<TAB>kind<TAB>target_gene`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MISSING_TOKEN: &str = "NA";
pub const EXPRESSION_ID_COLUMN: &str = "experiment_id";
pub const METADATA_HEADER: [&str; 4] = ["experiment_id", "plate_id", "kind", "target_gene"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    Control,
    Knockdown,
    Perturbation,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Control => "control",
            ExperimentKind::Knockdown => "knockdown",
            ExperimentKind::Perturbation => "perturbation",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "control" => Ok(ExperimentKind::Control),
            "knockdown" => Ok(ExperimentKind::Knockdown),
            "perturbation" => Ok(ExperimentKind::Perturbation),
            other => Err(format!("unknown experiment kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentMeta {
    pub experiment_id: String,
    pub plate_id: String,
    pub kind: ExperimentKind,
    /// Knocked-down gene for knockdowns; an optional free-form label for
    /// perturbations; always absent for controls.
    pub target_gene: Option<String>,
}

impl ExperimentMeta {
    pub fn new(
        experiment_id: impl Into<String>,
        plate_id: impl Into<String>,
        kind: ExperimentKind,
        target_gene: Option<String>,
    ) -> Result<Self> {
        let meta = ExperimentMeta {
            experiment_id: experiment_id.into(),
            plate_id: plate_id.into(),
            kind,
            target_gene,
        };
        meta.check()?;
        Ok(meta)
    }

    fn check(&self) -> Result<()> {
        match (self.kind, &self.target_gene) {
            (ExperimentKind::Control, Some(t)) => Err(Error::validation(format!(
                "experiment {}: control must not have target_gene (got {t:?})",
                self.experiment_id
            ))),
            (ExperimentKind::Knockdown, None) => Err(Error::validation(format!(
                "experiment {}: knockdown requires target_gene",
                self.experiment_id
            ))),
            _ => Ok(()),
        }
    }
}

/// Experiment values as parsed, before joining with metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub gene_ids: Vec<String>,
    pub row_ids: Vec<String>,
    /// Row-major, `row_ids.len() * gene_ids.len()` entries. `None` marks `NA`.
    pub values: Vec<Option<f64>>,
}

impl ExpressionMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let g = self.n_genes();
        &self.values[i * g..(i + 1) * g]
    }
}

/// One data row from an expression stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionRow {
    pub experiment_id: String,
    pub values: Vec<Option<f64>>,
}

/// Row-at-a-time reader for expression TSV, so callers can stream large
/// files without holding the matrix in memory.
pub struct ExpressionReader<R> {
    source: R,
    gene_ids: Vec<String>,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> ExpressionReader<R> {
    pub fn new(mut source: R) -> Result<Self> {
        let mut buf = String::new();
        if source.read_line(&mut buf)? == 0 {
            return Err(Error::Structure {
                line: 1,
                message: "missing header row".into(),
            });
        }
        let header = trim_eol(&buf);
        let mut cells = header.split('\t');
        if cells.next() != Some(EXPRESSION_ID_COLUMN) {
            return Err(Error::Structure {
                line: 1,
                message: format!("header must start with {EXPRESSION_ID_COLUMN:?}"),
            });
        }
        let gene_ids: Vec<String> = cells.map(str::to_owned).collect();
        if gene_ids.is_empty() {
            return Err(Error::Structure {
                line: 1,
                message: "header names no genes".into(),
            });
        }
        let mut seen = HashSet::with_capacity(gene_ids.len());
        for g in &gene_ids {
            if g.is_empty() {
                return Err(Error::validation("empty gene id in header"));
            }
            if !seen.insert(g.as_str()) {
                return Err(Error::validation(format!("duplicate gene id {g:?} in header")));
            }
        }
        Ok(ExpressionReader {
            source,
            gene_ids,
            line_no: 1,
            buf,
        })
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    fn parse_row(&self, line: &str) -> Result<ExpressionRow> {
        let expected = self.gene_ids.len() + 1;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != expected {
            return Err(Error::Structure {
                line: self.line_no,
                message: format!("expected {expected} cells, found {}", cells.len()),
            });
        }
        let id = cells[0];
        if id.is_empty() {
            return Err(Error::Parse {
                line: self.line_no,
                column: 1,
                message: "empty experiment id".into(),
            });
        }
        let mut values = Vec::with_capacity(self.gene_ids.len());
        for (j, cell) in cells[1..].iter().enumerate() {
            values.push(parse_cell(cell).map_err(|message| Error::Parse {
                line: self.line_no,
                column: j + 2,
                message,
            })?);
        }
        Ok(ExpressionRow {
            experiment_id: id.to_owned(),
            values,
        })
    }
}

impl<R: BufRead> Iterator for ExpressionReader<R> {
    type Item = Result<ExpressionRow>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.source.read_line(&mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line_no += 1;
                let line = trim_eol(&self.buf).to_owned();
                Some(self.parse_row(&line))
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}

fn trim_eol(s: &str) -> &str {
    let s = s.strip_suffix('\n').unwrap_or(s);
    s.strip_suffix('\r').unwrap_or(s)
}

fn parse_cell(cell: &str) -> std::result::Result<Option<f64>, String> {
    if cell == MISSING_TOKEN {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| format!("not a number or {MISSING_TOKEN}: {cell:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value {cell:?}"));
    }
    Ok(Some(v))
}

pub fn parse_expression<R: BufRead>(source: R) -> Result<ExpressionMatrix> {
    let mut reader = ExpressionReader::new(source)?;
    let gene_ids = reader.gene_ids().to_vec();
    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for row in &mut reader {
        let row = row?;
        row_ids.push(row.experiment_id);
        values.extend(row.values);
    }
    Ok(ExpressionMatrix {
        gene_ids,
        row_ids,
        values,
    })
}

pub fn parse_metadata<R: BufRead>(source: R) -> Result<Vec<ExperimentMeta>> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Structure {
                line: 1,
                message: "missing header row".into(),
            })
        }
    };
    if trim_eol(&header).split('\t').ne(METADATA_HEADER.iter().copied()) {
        return Err(Error::Structure {
            line: 1,
            message: format!("metadata header must be {:?}", METADATA_HEADER.join("\t")),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let cells: Vec<&str> = trim_eol(&line).split('\t').collect();
        if cells.len() != METADATA_HEADER.len() {
            return Err(Error::Structure {
                line: line_no,
                message: format!("expected 4 cells, found {}", cells.len()),
            });
        }
        if cells[0].is_empty() || cells[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                column: if cells[0].is_empty() { 1 } else { 2 },
                message: "empty identifier".into(),
            });
        }
        let kind: ExperimentKind = cells[2].parse().map_err(|message| Error::Parse {
            line: line_no,
            column: 3,
            message,
        })?;
        let target = (!cells[3].is_empty()).then(|| cells[3].to_owned());
        out.push(ExperimentMeta::new(cells[0], cells[1], kind, target)?);
    }
    Ok(out)
}

/// Post-validation state of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentStatus {
    Usable,
    /// Plate has fewer than two controls, so no baseline SD exists.
    UnusablePlate,
    /// Knockdown target is not a measured gene.
    OffPanel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatusCounts {
    pub usable: usize,
    pub unusable_plate: usize,
    pub off_panel: usize,
}

/// Minimum number of control experiments a plate needs to supply a baseline.
pub const MIN_PLATE_CONTROLS: usize = 2;

/// Assign a status to every experiment. Pure metadata logic, shared by the
/// in-memory and streaming paths.
pub fn classify_experiments(
    experiments: &[ExperimentMeta],
    gene_index: &HashMap<String, usize>,
) -> Vec<ExperimentStatus> {
    let mut controls_per_plate: HashMap<&str, usize> = HashMap::new();
    for e in experiments {
        if e.kind == ExperimentKind::Control {
            *controls_per_plate.entry(e.plate_id.as_str()).or_default() += 1;
        }
    }
    experiments
        .iter()
        .map(|e| match e.kind {
            ExperimentKind::Control => ExperimentStatus::Usable,
            ExperimentKind::Knockdown if !gene_index.contains_key(e.target_gene.as_deref().unwrap_or_default()) => {
                ExperimentStatus::OffPanel
            }
            _ if controls_per_plate.get(e.plate_id.as_str()).copied().unwrap_or(0) < MIN_PLATE_CONTROLS => {
                ExperimentStatus::UnusablePlate
            }
            _ => ExperimentStatus::Usable,
        })
        .collect()
}

pub fn count_statuses(status: &[ExperimentStatus]) -> StatusCounts {
    let mut c = StatusCounts::default();
    for s in status {
        match s {
            ExperimentStatus::Usable => c.usable += 1,
            ExperimentStatus::UnusablePlate => c.unusable_plate += 1,
            ExperimentStatus::OffPanel => c.off_panel += 1,
        }
    }
    c
}

/// Check that two id lists are the same set with no duplicates, reporting the
/// symmetric difference otherwise.
pub fn check_id_agreement<'a>(
    matrix_ids: impl IntoIterator<Item = &'a str>,
    meta_ids: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    fn collect<'a>(ids: impl IntoIterator<Item = &'a str>, what: &str) -> Result<BTreeSet<&'a str>> {
        let mut set = BTreeSet::new();
        for id in ids {
            if !set.insert(id) {
                return Err(Error::validation(format!("duplicate experiment id {id:?} in {what}")));
            }
        }
        Ok(set)
    }
    let m = collect(matrix_ids, "expression matrix")?;
    let d = collect(meta_ids, "metadata")?;
    if m != d {
        let only_matrix: Vec<&str> = m.difference(&d).copied().collect();
        let only_meta: Vec<&str> = d.difference(&m).copied().collect();
        return Err(Error::validation(format!(
            "experiment ids differ between matrix and metadata: only in matrix {only_matrix:?}, only in metadata {only_meta:?}"
        )));
    }
    Ok(())
}

/// Joined, validated dataset. Immutable once built.
#[derive(Debug, Clone)]
pub struct ExpressionDataset {
    gene_ids: Vec<String>,
    gene_index: HashMap<String, usize>,
    experiments: Vec<ExperimentMeta>,
    status: Vec<ExperimentStatus>,
    values: Vec<Option<f64>>,
}

impl ExpressionDataset {
    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn gene_index(&self) -> &HashMap<String, usize> {
        &self.gene_index
    }

    pub fn gene_position(&self, gene: &str) -> Option<usize> {
        self.gene_index.get(gene).copied()
    }

    pub fn experiments(&self) -> &[ExperimentMeta] {
        &self.experiments
    }

    pub fn status(&self) -> &[ExperimentStatus] {
        &self.status
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_experiments(&self) -> usize {
        self.experiments.len()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let g = self.n_genes();
        &self.values[i * g..(i + 1) * g]
    }

    pub fn status_counts(&self) -> StatusCounts {
        count_statuses(&self.status)
    }

    pub fn to_matrix(&self) -> ExpressionMatrix {
        ExpressionMatrix {
            gene_ids: self.gene_ids.clone(),
            row_ids: self.experiments.iter().map(|e| e.experiment_id.clone()).collect(),
            values: self.values.clone(),
        }
    }

    /// Rows in file order together with their metadata and status.
    pub fn rows(&self) -> impl Iterator<Item = (&ExperimentMeta, ExperimentStatus, &[Option<f64>])> {
        (0..self.n_experiments()).map(move |i| (&self.experiments[i], self.status[i], self.row(i)))
    }
}

pub fn gene_index_of(gene_ids: &[String]) -> HashMap<String, usize> {
    gene_ids.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect()
}

/// Join a parsed matrix with metadata. Experiments keep the matrix row order.
pub fn validate_dataset(matrix: ExpressionMatrix, meta: Vec<ExperimentMeta>) -> Result<ExpressionDataset> {
    if matrix.values.len() != matrix.n_rows() * matrix.n_genes() {
        return Err(Error::Consistency("matrix shape does not match value count".into()));
    }
    check_id_agreement(
        matrix.row_ids.iter().map(String::as_str),
        meta.iter().map(|m| m.experiment_id.as_str()),
    )?;
    for m in &meta {
        m.check()?;
    }
    let mut by_id: BTreeMap<String, ExperimentMeta> = meta.into_iter().map(|m| (m.experiment_id.clone(), m)).collect();
    let experiments: Vec<ExperimentMeta> = matrix
        .row_ids
        .iter()
        .map(|id| by_id.remove(id).expect("id sets checked equal"))
        .collect();
    let gene_index = gene_index_of(&matrix.gene_ids);
    let status = classify_experiments(&experiments, &gene_index);
    let usable_non_control = experiments
        .iter()
        .zip(&status)
        .filter(|(e, s)| e.kind != ExperimentKind::Control && **s == ExperimentStatus::Usable)
        .count();
    if usable_non_control == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(ExpressionDataset {
        gene_ids: matrix.gene_ids,
        gene_index,
        experiments,
        status,
        values: matrix.values,
    })
}

pub fn write_expression<W: Write>(mut sink: W, matrix: &ExpressionMatrix) -> Result<()> {
    write!(sink, "{EXPRESSION_ID_COLUMN}")?;
    for g in &matrix.gene_ids {
        write!(sink, "\t{g}")?;
    }
    writeln!(sink)?;
    for i in 0..matrix.n_rows() {
        write_expression_row(&mut sink, &matrix.row_ids[i], matrix.row(i))?;
    }
    Ok(())
}

pub(crate) fn write_expression_row<W: Write>(sink: &mut W, id: &str, values: &[Option<f64>]) -> Result<()> {
    sink.write_all(id.as_bytes())?;
    for v in values {
        match v {
            // Display for f64 is the shortest representation that round-trips.
            Some(x) => write!(sink, "\t{x}")?,
            None => write!(sink, "\t{MISSING_TOKEN}")?,
        }
    }
    writeln!(sink)?;
    Ok(())
}

pub fn write_metadata<W: Write>(mut sink: W, meta: &[ExperimentMeta]) -> Result<()> {
    writeln!(sink, "{}", METADATA_HEADER.join("\t"))?;
    for m in meta {
        writeln!(
            sink,
            "{}\t{}\t{}\t{}",
            m.experiment_id,
            m.plate_id,
            m.kind,
            m.target_gene.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}
