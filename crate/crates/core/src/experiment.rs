//! Configuration-driven experiments: problem definitions, runs of several
//! strategies, trace and summary files, and trace comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::{run_with, AdaptiveConfig, AdaptiveTrace, IterationRecord, Status, Strategy};
use crate::error::{Error, Result};
use crate::estimators::{p_value, NormSpec, ReferenceGrid, MAX_REFERENCE_DIM};
use crate::fem::{DiffusionProblem, Discretization, Ellipticity, Field};
use crate::interp::InterpolantSnapshot;
use crate::nodes::NodeKind;

/// Column names of a trace file, in order.
pub const TRACE_COLUMNS: [&str; 10] = [
    "n",
    "strategy",
    "lambda_size",
    "grid_size",
    "solves",
    "total_estimator",
    "max_estimator",
    "reference_error",
    "effectivity",
    "wall_ms",
];

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn two() -> f64 {
    2.0
}

/// Problem block of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `a_0` constant, `a_m = γ m^{-σ} cos(mπx)`, `f` constant.
    Cosine {
        dim: usize,
        #[serde(default = "one")]
        a0: f64,
        #[serde(default = "half")]
        gamma: f64,
        #[serde(default = "two")]
        sigma: f64,
        #[serde(default = "one")]
        rhs: f64,
    },
    /// `a_m = γ` on the `m`-th of `M` equal subintervals.
    Inclusions {
        dim: usize,
        #[serde(default = "one")]
        a0: f64,
        #[serde(default = "half")]
        gamma: f64,
        #[serde(default = "one")]
        rhs: f64,
    },
    /// All `a_m ≡ 0`.
    Deterministic {
        dim: usize,
        #[serde(default = "one")]
        a0: f64,
        #[serde(default = "one")]
        rhs: f64,
    },
    /// Explicit fields.
    Custom {
        a0: Field,
        fields: Vec<Field>,
        rhs: Field,
    },
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Cosine {
            dim: 2,
            a0: 1.0,
            gamma: 0.5,
            sigma: 2.0,
            rhs: 1.0,
        }
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<DiffusionProblem> {
        let p = match self {
            ProblemSpec::Cosine {
                dim,
                a0,
                gamma,
                sigma,
                rhs,
            } => DiffusionProblem::cosine(*dim, *a0, *gamma, *sigma, *rhs),
            ProblemSpec::Inclusions {
                dim,
                a0,
                gamma,
                rhs,
            } => DiffusionProblem::inclusions(*dim, *a0, *gamma, *rhs),
            ProblemSpec::Deterministic { dim, a0, rhs } => {
                DiffusionProblem::deterministic(*dim, *a0, *rhs)
            }
            ProblemSpec::Custom { a0, fields, rhs } => DiffusionProblem {
                a0: a0.clone(),
                fields: fields.clone(),
                rhs: rhs.clone(),
            },
        };
        if p.dim() == 0 {
            return Err(Error::Config(
                "the problem needs at least one parameter".into(),
            ));
        }
        Ok(p)
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("problem specs serialize");
        let canonical = serde_json::to_string(&value).expect("values serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: ProblemSpec,
    /// Number of finite elements `N`.
    #[serde(default = "default_mesh")]
    pub mesh_elements: usize,
    #[serde(default = "default_nodes")]
    pub nodes: NodeKind,
    /// Parametric norm exponent, a number or `"inf"`.
    #[serde(with = "p_value", default = "two")]
    pub p: f64,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_max_solves")]
    pub max_solves: usize,
    /// Gauss order per dimension of the `p < ∞` reference grid.
    #[serde(default = "default_reference_order")]
    pub reference_order: usize,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
    /// Only used by sampling-based checks.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// GG bulk marking fraction; single argmax when absent.
    #[serde(default)]
    pub doerfler_fraction: Option<f64>,
}

fn default_mesh() -> usize {
    256
}

fn default_nodes() -> NodeKind {
    NodeKind::Leja
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::GnEnvelope, Strategy::Gg]
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    200
}

fn default_max_solves() -> usize {
    100_000
}

fn default_reference_order() -> usize {
    20
}

fn default_outdir() -> PathBuf {
    PathBuf::from("results")
}

fn default_parallelism() -> usize {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    /// Parses JSON; errors carry the line and column.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            Error::Config(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies must not be empty".into()));
        }
        if self.mesh_elements < 2 {
            return Err(Error::Config("mesh_elements must be at least 2".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.adaptive(self.strategies[0]).validate()
    }

    pub fn norm(&self) -> NormSpec {
        NormSpec {
            p: self.p,
            ..NormSpec::default()
        }
    }

    /// Reference-error cadence: every iteration for `M ≤ 2`, every 5th for
    /// `M ≤ 4`, never beyond unless forced.
    pub fn reference_every(&self, dim: usize, force: bool) -> usize {
        match dim {
            _ if force => 1,
            0..=2 => 1,
            d if d <= MAX_REFERENCE_DIM => 5,
            _ => 0,
        }
    }

    pub fn adaptive(&self, strategy: Strategy) -> AdaptiveConfig {
        AdaptiveConfig {
            strategy,
            norm: self.norm(),
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            max_solves: self.max_solves,
            nodes: self.nodes,
            parallelism: self.parallelism,
            doerfler_fraction: self.doerfler_fraction,
            reference_every: 0,
        }
    }
}

/// Command-line overrides of [`ExperimentConfig`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub outdir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub force_reference: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinalSet {
    pub problem_hash: String,
    pub strategy: Strategy,
    pub status: Status,
    pub mesh_elements: usize,
    pub interpolant: InterpolantSnapshot,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub status: Status,
    pub iterations: usize,
    pub lambda_size: usize,
    pub grid_size: usize,
    pub solves: usize,
    pub total_estimator: f64,
    /// Reference error of the returned interpolant (GG: after augmentation).
    pub terminal_error: Option<f64>,
    /// GG only: reference error before augmentation.
    pub pre_augmentation_error: Option<f64>,
    pub effectivity_min: Option<f64>,
    pub effectivity_median: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub problem_hash: String,
    pub a_min: f64,
    pub a_max: f64,
    pub alpha: f64,
    pub config: ExperimentConfig,
    pub strategies: Vec<StrategySummary>,
}

impl Summary {
    /// 0 when every strategy converged, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self
            .strategies
            .iter()
            .all(|s| s.status == Status::Converged)
        {
            0
        } else {
            2
        }
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Appends one row per iteration and flushes after each.
pub struct TraceWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, problem_hash: &str, strategy: Strategy) -> Result<Self> {
        writeln!(out, "# problem_hash={problem_hash} strategy={strategy}")?;
        let mut out = csv::Writer::from_writer(out);
        out.write_record(TRACE_COLUMNS)?;
        out.flush()?;
        Ok(TraceWriter { out })
    }

    pub fn write(&mut self, strategy: Strategy, r: &IterationRecord) -> Result<()> {
        self.out.write_record([
            r.n.to_string(),
            strategy.to_string(),
            r.index_set.len().to_string(),
            r.grid_size.to_string(),
            r.solves.to_string(),
            fmt_float(r.report.total),
            fmt_float(r.report.max),
            fmt_opt(r.reference_error),
            fmt_opt(r.effectivity),
            format!("{:.3}", r.wall_ms),
        ])?;
        self.out.flush()?;
        Ok(())
    }
}

fn summarize(trace: &AdaptiveTrace) -> StrategySummary {
    let last = trace.last();
    let mut eff: Vec<f64> = trace.records.iter().filter_map(|r| r.effectivity).collect();
    eff.sort_by(f64::total_cmp);
    let median = (!eff.is_empty()).then(|| {
        let m = eff.len() / 2;
        if eff.len() % 2 == 1 {
            eff[m]
        } else {
            0.5 * (eff[m - 1] + eff[m])
        }
    });
    StrategySummary {
        strategy: trace.strategy,
        status: trace.status,
        iterations: trace.records.len(),
        lambda_size: trace.interpolant.index_set().len(),
        grid_size: trace.interpolant.num_points(),
        solves: trace.total_solves(),
        total_estimator: last.report.total,
        terminal_error: trace.final_reference_error(),
        pre_augmentation_error: trace.augmentation.as_ref().and(last.reference_error),
        effectivity_min: eff.first().copied(),
        effectivity_median: median,
    }
}

/// Runs every configured strategy and writes traces, final sets and the
/// summary into the output directory.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let mut config = config.clone();
    if let Some(dir) = &opts.outdir {
        config.outdir = dir.clone();
    }
    if let Some(k) = opts.parallelism {
        config.parallelism = k;
    }
    config.validate()?;
    let problem = config.problem.build()?;
    let disc = Discretization::new(&problem, config.mesh_elements)?;
    let ell: Ellipticity = disc.check_ellipticity()?;
    let hash = config.problem.hash();
    let dim = problem.dim();
    let every = config.reference_every(dim, opts.force_reference);
    let norm = config.norm();
    let reference = if every > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Some(pool.install(|| ReferenceGrid::new(&disc, &norm, config.reference_order))?)
    } else {
        None
    };
    fs::create_dir_all(&config.outdir)?;

    let mut summaries = Vec::new();
    for &strategy in &config.strategies {
        let mut adaptive = config.adaptive(strategy);
        adaptive.reference_every = every;
        let file = File::create(config.outdir.join(format!("{strategy}-trace.csv")))?;
        let mut writer = TraceWriter::new(BufWriter::new(file), &hash, strategy)?;
        let mut write_error = None;
        let trace = run_with(&disc, &adaptive, reference.as_ref(), &mut |r| {
            if let Err(e) = writer.write(strategy, r) {
                write_error.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_error {
            return Err(e);
        }
        let final_set = FinalSet {
            problem_hash: hash.clone(),
            strategy,
            status: trace.status,
            mesh_elements: config.mesh_elements,
            interpolant: trace.interpolant.to_snapshot(),
        };
        let out = BufWriter::new(File::create(
            config.outdir.join(format!("{strategy}-final-set.json")),
        )?);
        serde_json::to_writer(out, &final_set)?;
        summaries.push(summarize(&trace));
    }
    let summary = Summary {
        problem_hash: hash,
        a_min: ell.a_min,
        a_max: ell.a_max,
        alpha: ell.alpha,
        config: config.clone(),
        strategies: summaries,
    };
    let out = BufWriter::new(File::create(config.outdir.join("summary.json"))?);
    serde_json::to_writer_pretty(out, &summary)?;
    Ok(summary)
}

/// One parsed row of a trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub strategy: String,
    pub lambda_size: usize,
    pub grid_size: usize,
    pub solves: usize,
    pub total_estimator: f64,
    pub max_estimator: f64,
    pub reference_error: Option<f64>,
    pub effectivity: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TraceFile {
    pub problem_hash: String,
    pub strategy: String,
    pub rows: Vec<TraceRow>,
}

fn trace_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Trace {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

impl TraceFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let first = text.lines().next().unwrap_or_default();
        let meta: BTreeMap<&str, &str> = first
            .strip_prefix('#')
            .ok_or_else(|| trace_error(path, "missing '# problem_hash=...' header line"))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let problem_hash = meta
            .get("problem_hash")
            .ok_or_else(|| trace_error(path, "header line lacks problem_hash"))?
            .to_string();
        let strategy = meta
            .get("strategy")
            .copied()
            .unwrap_or_default()
            .to_string();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != TRACE_COLUMNS {
            return Err(trace_error(path, format!("unexpected columns {header:?}")));
        }
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| trace_error(path, format!("row {}: invalid {what}", line + 1));
            let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(TRACE_COLUMNS[i]));
            let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(TRACE_COLUMNS[i]));
            let opt = |i: usize| -> Result<Option<f64>> {
                if rec[i].is_empty() {
                    Ok(None)
                } else {
                    float(i).map(Some)
                }
            };
            rows.push(TraceRow {
                n: int(0)?,
                strategy: rec[1].to_string(),
                lambda_size: int(2)?,
                grid_size: int(3)?,
                solves: int(4)?,
                total_estimator: float(5)?,
                max_estimator: float(6)?,
                reference_error: opt(7)?,
                effectivity: opt(8)?,
                wall_ms: float(9)?,
            });
        }
        Ok(TraceFile {
            problem_hash,
            strategy,
            rows,
        })
    }
}

/// Reference errors of several traces on a common cumulative-solves axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub problem_hash: String,
    pub labels: Vec<String>,
    /// `(solves, error per trace)`
    pub rows: Vec<(usize, Vec<Option<f64>>)>,
}

pub fn compare_report(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.is_empty() {
        return Err(Error::Usage("compare <trace.csv>...".into()));
    }
    let traces: Vec<TraceFile> = paths
        .iter()
        .map(|p| TraceFile::read(p))
        .collect::<Result<_>>()?;
    let hash = traces[0].problem_hash.clone();
    if let Some(other) = traces.iter().find(|t| t.problem_hash != hash) {
        return Err(Error::ProblemMismatch(hash, other.problem_hash.clone()));
    }
    let mut labels: Vec<String> = traces.iter().map(|t| t.strategy.clone()).collect();
    let unique: BTreeSet<&String> = labels.iter().collect();
    if unique.len() != labels.len() || labels.iter().any(String::is_empty) {
        labels = paths
            .iter()
            .map(|p| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect();
    }
    let mut table: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (t, trace) in traces.iter().enumerate() {
        for row in &trace.rows {
            let cells = table
                .entry(row.solves)
                .or_insert_with(|| vec![None; traces.len()]);
            if row.reference_error.is_some() || cells[t].is_none() {
                cells[t] = row.reference_error.or(cells[t]);
            }
        }
    }
    Ok(Comparison {
        problem_hash: hash,
        labels,
        rows: table.into_iter().collect(),
    })
}

impl Comparison {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["solves".to_string()];
        header.extend(self.labels.iter().map(|l| format!("{l}_reference_error")));
        w.write_record(&header)?;
        for (solves, cells) in &self.rows {
            let mut rec = vec![solves.to_string()];
            rec.extend(cells.iter().map(|c| fmt_opt(*c)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "problem {}", self.problem_hash)?;
        write!(f, "{:>8}", "solves")?;
        for l in &self.labels {
            write!(f, "  {l:>14}")?;
        }
        writeln!(f)?;
        for (solves, cells) in &self.rows {
            write!(f, "{solves:>8}")?;
            for c in cells {
                match c {
                    Some(v) => write!(f, "  {v:>14.6e}")?,
                    None => write!(f, "  {:>14}", "-")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_fields() {
        let d = ExperimentConfig::default();
        assert_eq!(d.mesh_elements, 256);
        assert_eq!(d.problem, ProblemSpec::default());
        assert_eq!(d.strategies, vec![Strategy::GnEnvelope, Strategy::Gg]);
        let err =
            ExperimentConfig::from_json("{\n  \"tolerence\": 1e-6\n}", "cfg.json").unwrap_err();
        assert!(err.to_string().contains("cfg.json:2:"), "{err}");
        let err = ExperimentConfig::from_json(
            r#"{"problem": {"family": "cosine", "dim": 2, "gama": 1}}"#,
            "x",
        );
        assert!(err.is_err());
        let cfg = ExperimentConfig::from_json(
            r#"{"p": "inf", "nodes": "cc", "strategies": ["GN_profit"]}"#,
            "x",
        )
        .unwrap();
        assert!(cfg.p.is_infinite());
        assert_eq!(cfg.nodes, NodeKind::ClenshawCurtis);
    }

    #[test]
    fn problem_hash_is_canonical() {
        let a: ProblemSpec = serde_json::from_str(r#"{"family": "cosine", "dim": 2}"#).unwrap();
        let b: ProblemSpec =
            serde_json::from_str(r#"{"sigma": 2.0, "dim": 2, "family": "cosine"}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c: ProblemSpec = serde_json::from_str(r#"{"family": "cosine", "dim": 3}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn reference_cadence() {
        let c = ExperimentConfig::default();
        assert_eq!(c.reference_every(2, false), 1);
        assert_eq!(c.reference_every(3, false), 5);
        assert_eq!(c.reference_every(4, false), 5);
        assert_eq!(c.reference_every(5, false), 0);
        assert_eq!(c.reference_every(5, true), 1);
    }

    #[test]
    fn trace_round_trip() {
        let text = "# problem_hash=abc strategy=GG\n\
                    n,strategy,lambda_size,grid_size,solves,total_estimator,max_estimator,reference_error,effectivity,wall_ms\n\
                    0,GG,1,1,3,1.0e-1,5.0e-2,2.0e-2,5.0e0,0.100\n\
                    1,GG,2,2,4,1.0e-2,5.0e-3,,,0.200\n";
        let t = TraceFile::parse(text, Path::new("t.csv")).unwrap();
        assert_eq!(t.problem_hash, "abc");
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].reference_error, None);
        assert!(TraceFile::parse("n,strategy\n", Path::new("t.csv")).is_err());
    }
}
