//! Command-line front end: `infer`, `eval` and `simulate`.
//!
//! Every setting can come from a flag or from a TOML config file passed with
//! `--config`; flags take precedence.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::edgelist::{read_edgelist, write_edgelist, PriorSpec, RankedEdgeList, DEFAULT_EDGE_PRIOR};
use crate::eval::{
    assess_cutoffs, auprc, load_reference, precision_recall_full, restrict_universe, write_confusion_report,
    write_curve, CutoffAssessment, ReferenceOptions,
};
use crate::inference::{GPolicy, ScoringParams, MIN_PAIRED_OBSERVATIONS};
use crate::ingest::{write_expression, write_metadata};
use crate::pipeline::{infer_files, InferenceOptions, InferenceReport, Mode};
use crate::simgen::{generate_network, simulate_dataset, write_truth, SimConfig, GENERATOR};

pub const DEFAULT_CUTOFFS: [f64; 2] = [0.5, 0.95];

pub const EXPRESSION_FILE: &str = "expression.tsv";
pub const METADATA_FILE: &str = "metadata.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";

#[derive(Debug, Parser)]
#[command(
    name = "grn-posterior",
    version,
    about = "Posterior edge probabilities from knockdown expression data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score regulator-target edges and write a ranked edgelist
    Infer(InferArgs),
    /// Assess an edgelist against a reference edge set
    Eval(EvalArgs),
    /// Generate a synthetic network and matching dataset
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Default)]
pub struct InferArgs {
    /// TOML file with default settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub expression: Option<PathBuf>,
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Edgelist TSV to write
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Scalar prior edge probability, or a path to a regulator/target/prior table
    #[arg(long)]
    pub prior: Option<String>,
    /// Prior for pairs missing from a prior table
    #[arg(long)]
    pub prior_default: Option<f64>,
    /// sqrt, unit or fixed:<v>
    #[arg(long)]
    pub g_policy: Option<String>,
    #[arg(long)]
    pub min_experiments: Option<usize>,
    /// knockdown or two-class
    #[arg(long)]
    pub mode: Option<String>,
    /// Worker threads (0 = all cores); output is identical for any value
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write the run report (JSON) here
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Assess the result against this reference after inference
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<f64>>,
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Edgelist TSV to assess
    #[arg(long)]
    pub edgelist: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<f64>>,
    /// Precision-recall curve TSV to write
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    /// Confusion report TSV to write (stdout when absent)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// File listing the regulator universe, one id per line
    #[arg(long)]
    pub regulators: Option<PathBuf>,
    /// File listing the target universe, one id per line
    #[arg(long)]
    pub targets: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// TOML simulation config; defaults apply to absent fields
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving expression.tsv, metadata.tsv and truth.tsv
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PriorValue {
    Scalar(f64),
    Table(PathBuf),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub expression: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub prior: Option<PriorValue>,
    pub prior_default: Option<f64>,
    pub g_policy: Option<String>,
    pub min_experiments: Option<usize>,
    pub mode: Option<String>,
    pub threads: Option<usize>,
    pub eval: Option<EvalSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub edgelist: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub cutoffs: Option<Vec<f64>>,
    pub curve_out: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub regulators: Option<PathBuf>,
    pub targets: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub reference_path: PathBuf,
    pub cutoffs: Vec<f64>,
    pub curve_path: Option<PathBuf>,
    pub regulators_path: Option<PathBuf>,
    pub targets_path: Option<PathBuf>,
}

/// Fully resolved settings for one `infer` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub expression_path: PathBuf,
    pub metadata_path: PathBuf,
    pub output_path: PathBuf,
    pub prior: PriorValue,
    pub prior_default: f64,
    pub g_policy: GPolicy,
    pub min_experiments: usize,
    pub mode: Mode,
    pub threads: usize,
    pub report_path: Option<PathBuf>,
    pub eval: Option<EvalSettings>,
}

fn check_cutoffs(cutoffs: &[f64]) -> Result<()> {
    for c in cutoffs {
        if !(0.0..=1.0).contains(c) {
            bail!("cutoff {c} outside [0, 1]");
        }
    }
    Ok(())
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    match value {
        Some(p) if !p.as_os_str().is_empty() => Ok(p),
        _ => bail!("missing required setting --{flag}"),
    }
}

impl RunConfig {
    pub fn resolve(args: InferArgs) -> Result<Self> {
        let file = ConfigFile::load_opt(args.config.as_deref())?;
        let eval_file = file.eval.clone().unwrap_or_default();
        let prior = match args.prior {
            Some(s) => match s.parse::<f64>() {
                Ok(v) => PriorValue::Scalar(v),
                Err(_) => PriorValue::Table(PathBuf::from(s)),
            },
            None => file.prior.unwrap_or(PriorValue::Scalar(DEFAULT_EDGE_PRIOR)),
        };
        let g_policy = args
            .g_policy
            .or(file.g_policy)
            .map(|s| s.parse::<GPolicy>())
            .transpose()?
            .unwrap_or_default();
        let mode = args
            .mode
            .or(file.mode)
            .map(|s| s.parse::<Mode>())
            .transpose()?
            .unwrap_or_default();
        let cutoffs = args
            .cutoffs
            .or(eval_file.cutoffs)
            .unwrap_or_else(|| DEFAULT_CUTOFFS.to_vec());
        check_cutoffs(&cutoffs)?;
        let eval = args
            .reference
            .or(eval_file.reference)
            .map(|reference_path| EvalSettings {
                reference_path,
                cutoffs,
                curve_path: args.curve_out.or(eval_file.curve_out),
                regulators_path: eval_file.regulators,
                targets_path: eval_file.targets,
            });
        let config = RunConfig {
            expression_path: required(args.expression.or(file.expression), "expression")?,
            metadata_path: required(args.metadata.or(file.metadata), "metadata")?,
            output_path: required(args.output.or(file.output), "output")?,
            prior,
            prior_default: args.prior_default.or(file.prior_default).unwrap_or(DEFAULT_EDGE_PRIOR),
            g_policy,
            min_experiments: args
                .min_experiments
                .or(file.min_experiments)
                .unwrap_or(MIN_PAIRED_OBSERVATIONS),
            mode,
            threads: args.threads.or(file.threads).unwrap_or(0),
            report_path: args.report,
            eval,
        };
        Ok(config)
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        Ok(match &self.prior {
            PriorValue::Scalar(p) => PriorSpec::scalar(*p)?,
            PriorValue::Table(path) => {
                let f = File::open(path).with_context(|| format!("opening prior table {}", path.display()))?;
                PriorSpec::read_table(BufReader::new(f), self.prior_default)?
            }
        })
    }

    pub fn inference_options(&self) -> Result<InferenceOptions> {
        Ok(InferenceOptions {
            prior: self.prior_spec()?,
            scoring: ScoringParams::new(self.g_policy, self.min_experiments)?,
            mode: self.mode,
            threads: self.threads,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
}

fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading id list {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub listed_edges: usize,
    pub universe_edges: usize,
    pub universe_size: usize,
    pub true_edges: usize,
    pub reference_duplicates: usize,
    pub baseline_precision: f64,
    pub auprc: f64,
    #[serde(skip)]
    pub cutoffs: Vec<CutoffAssessment>,
}

/// Assess an edgelist. Errors when no listed edge falls inside the universe.
pub fn evaluate(list: &RankedEdgeList, settings: &EvalSettings) -> Result<EvalSummary> {
    let options = ReferenceOptions {
        regulators: settings.regulators_path.as_deref().map(read_id_list).transpose()?,
        targets: settings.targets_path.as_deref().map(read_id_list).transpose()?,
    };
    let f = File::open(&settings.reference_path)
        .with_context(|| format!("opening reference file {}", settings.reference_path.display()))?;
    let loaded = load_reference(BufReader::new(f), &options)?;
    let reference = loaded.reference;
    let restricted = restrict_universe(list, &reference);
    if restricted.is_empty() {
        bail!(
            "none of the {} listed edges falls inside the reference universe ({} regulators, {} targets)",
            list.len(),
            reference.regulators().len(),
            reference.targets().len()
        );
    }
    let curve = precision_recall_full(&restricted, &reference)?;
    if let Some(path) = &settings.curve_path {
        write_curve(create(path)?, &curve)?;
    }
    Ok(EvalSummary {
        listed_edges: list.len(),
        universe_edges: restricted.len(),
        universe_size: reference.universe_size(),
        true_edges: reference.true_edge_count(),
        reference_duplicates: loaded.duplicates,
        baseline_precision: reference.baseline_precision(),
        auprc: auprc(&curve),
        cutoffs: assess_cutoffs(&restricted, &reference, &settings.cutoffs),
    })
}

pub fn run_infer(config: &RunConfig) -> Result<InferenceReport> {
    let options = config.inference_options()?;
    let out = infer_files(&config.expression_path, &config.metadata_path, &options)?;
    write_edgelist(create(&config.output_path)?, &out.edges)?;
    let report_json = serde_json::to_string_pretty(&out.report)?;
    eprintln!("{report_json}");
    if let Some(path) = &config.report_path {
        fs::write(path, format!("{report_json}\n")).with_context(|| format!("writing report {}", path.display()))?;
    }
    if let Some(eval) = &config.eval {
        let summary = evaluate(&out.edges, eval)?;
        write_confusion_report(io::stderr().lock(), &summary.cutoffs)?;
        eprintln!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(out.report)
}

pub fn resolve_eval(args: EvalArgs) -> Result<(PathBuf, EvalSettings, Option<PathBuf>)> {
    let file = ConfigFile::load_opt(args.config.as_deref())?;
    let section = file.eval.unwrap_or_default();
    let cutoffs = args
        .cutoffs
        .or(section.cutoffs)
        .unwrap_or_else(|| DEFAULT_CUTOFFS.to_vec());
    check_cutoffs(&cutoffs)?;
    let edgelist = required(args.edgelist.or(section.edgelist).or(file.output), "edgelist")?;
    let settings = EvalSettings {
        reference_path: required(args.reference.or(section.reference), "reference")?,
        cutoffs,
        curve_path: args.curve_out.or(section.curve_out),
        regulators_path: args.regulators.or(section.regulators),
        targets_path: args.targets.or(section.targets),
    };
    Ok((edgelist, settings, args.output.or(section.output)))
}

pub fn run_eval(edgelist: &Path, settings: &EvalSettings, output: Option<&Path>) -> Result<EvalSummary> {
    let f = File::open(edgelist).with_context(|| format!("opening edgelist {}", edgelist.display()))?;
    let list = read_edgelist(BufReader::new(f)).with_context(|| format!("reading edgelist {}", edgelist.display()))?;
    let summary = evaluate(&list, settings)?;
    match output {
        Some(path) => write_confusion_report(create(path)?, &summary.cutoffs)?,
        None => write_confusion_report(io::stdout().lock(), &summary.cutoffs)?,
    }
    eprintln!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub generator: &'static str,
    pub genes: usize,
    pub regulators: usize,
    pub edges: usize,
    pub experiments: usize,
}

pub fn resolve_sim_config(args: &SimulateArgs) -> Result<SimConfig> {
    let mut config = match &args.sim_config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading sim config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing sim config {}", path.display()))?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

pub fn run_simulate(config: &SimConfig, out_dir: &Path) -> Result<SimulationReport> {
    let network = generate_network(config)?;
    let dataset = simulate_dataset(&network, config)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut w = create(&out_dir.join(EXPRESSION_FILE))?;
    write_expression(&mut w, &dataset.to_matrix())?;
    w.flush()?;
    let mut w = create(&out_dir.join(METADATA_FILE))?;
    write_metadata(&mut w, dataset.experiments())?;
    w.flush()?;
    write_truth(create(&out_dir.join(TRUTH_FILE))?, &network)?;
    let report = SimulationReport {
        seed: config.seed,
        generator: GENERATOR,
        genes: network.genes.len(),
        regulators: network.regulators.len(),
        edges: network.edges.len(),
        experiments: dataset.n_experiments(),
    };
    eprintln!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Infer(args) => {
            run_infer(&RunConfig::resolve(args)?)?;
        }
        Command::Eval(args) => {
            let (edgelist, settings, output) = resolve_eval(args)?;
            run_eval(&edgelist, &settings, output.as_deref())?;
        }
        Command::Simulate(args) => {
            let config = resolve_sim_config(&args)?;
            run_simulate(&config, &args.output)?;
        }
    }
    Ok(())
}
