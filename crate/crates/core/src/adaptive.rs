//! Adaptive construction of `Λ_0 = {0} ⊂ Λ_1 ⊂ ...`.
//!
//! Every strategy repeats: estimate on a candidate set, mark, enlarge `Λ`.
//!
//! * `GG`: candidates are the reduced margin, indicators are
//!   `‖Δ_k u‖` (needing solves at `Y_k^+`), the argmax is added. On
//!   termination `Λ` is augmented by its reduced margin, whose solves are
//!   already cached.
//! * `GN_envelope`: candidates are the full margin, indicators are the
//!   residual estimators `‖Δ_k(a∇u_n)‖` (no solves), the monotone envelope of
//!   the argmax is added.
//! * `GN_profit`: as `GN_envelope`, but the argmax is over profits.
//!
//! Argmax ties go to the lexicographically smallest index. The loop stops
//! when the total estimator drops below the tolerance or a budget runs out.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    increment_solutions, residual_report, surplus_indicator, EstimatorReport, NormSpec,
    ReferenceGrid,
};
use crate::fem::{Discretization, SolveCache};
use crate::interp::{work, SparseInterpolant};
use crate::multiindex::{MonotoneIndexSet, MultiIndex};
use crate::nodes::{NodeFamily, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "GG")]
    Gg,
    #[serde(rename = "GN_envelope")]
    GnEnvelope,
    #[serde(rename = "GN_profit")]
    GnProfit,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Gg, Strategy::GnEnvelope, Strategy::GnProfit];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gg => "GG",
            Strategy::GnEnvelope => "GN_envelope",
            Strategy::GnProfit => "GN_profit",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?} (expected GG, GN_envelope or GN_profit)"
                ))
            })
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveConfig {
    pub strategy: Strategy,
    pub norm: NormSpec,
    /// Stop once the total estimator is at most this.
    pub tolerance: f64,
    /// Number of refinement steps allowed.
    pub max_iterations: usize,
    /// Cap on distinct PDE solves.
    pub max_solves: usize,
    pub nodes: NodeKind,
    /// Worker threads; results do not depend on it.
    pub parallelism: usize,
    /// GG only: mark the smallest set of largest indicators whose sum is at
    /// least this fraction of the total, instead of the single argmax.
    pub doerfler_fraction: Option<f64>,
    /// Compute the reference error every this many iterations (0: never).
    pub reference_every: usize,
}

impl AdaptiveConfig {
    pub fn new(strategy: Strategy) -> Self {
        AdaptiveConfig {
            strategy,
            norm: NormSpec::default(),
            tolerance: 1e-8,
            max_iterations: 200,
            max_solves: 1_000_000,
            nodes: NodeKind::Leja,
            parallelism: 1,
            doerfler_fraction: None,
            reference_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 || self.max_solves == 0 {
            return Err(Error::Config(
                "iteration and solve budgets must be at least 1".into(),
            ));
        }
        if let Some(theta) = self.doerfler_fraction {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::Config(format!(
                    "doerfler_fraction must lie in (0, 1], got {theta}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    BudgetExhausted,
}

/// State and estimates of iteration `n`, before `Λ_n` is enlarged.
#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    pub index_set: Vec<MultiIndex>,
    pub candidates: usize,
    /// `k*_n`; `None` on the last iteration.
    pub selected: Option<MultiIndex>,
    /// `Mark_n`; empty on the last iteration.
    pub marked: Vec<MultiIndex>,
    pub report: EstimatorReport,
    /// Cumulative distinct PDE solves.
    pub solves: usize,
    /// `|Y_{Λ_n}|`
    pub grid_size: usize,
    pub reference_error: Option<f64>,
    /// Error bound over reference error: `total / (a_min err)` for the
    /// residual estimator, `total / err` for surplus indicators.
    pub effectivity: Option<f64>,
    /// Elapsed time since the start of the run.
    pub wall_ms: f64,
}

/// `Λ ∪ RMarg(Λ)` at the end of a GG run.
#[derive(Clone, Debug, Serialize)]
pub struct Augmentation {
    pub index_set_size: usize,
    pub grid_size: usize,
    pub solves: usize,
    pub reference_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AdaptiveTrace {
    pub strategy: Strategy,
    pub status: Status,
    pub records: Vec<IterationRecord>,
    /// Final interpolant (for GG after augmentation).
    pub interpolant: SparseInterpolant,
    pub a_min: f64,
    pub augmentation: Option<Augmentation>,
}

impl AdaptiveTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records
            .last()
            .expect("a trace has at least one record")
    }

    pub fn total_solves(&self) -> usize {
        self.augmentation
            .as_ref()
            .map_or(self.last().solves, |a| a.solves)
    }

    /// Reference error of the returned interpolant, if measured.
    pub fn final_reference_error(&self) -> Option<f64> {
        match &self.augmentation {
            Some(a) => a.reference_error,
            None => self.last().reference_error,
        }
    }
}

/// Runs the configured strategy. `reference` is used every
/// `config.reference_every` iterations; `observer` sees each record as soon
/// as it is complete.
pub fn run_with(
    disc: &Discretization,
    config: &AdaptiveConfig,
    reference: Option<&ReferenceGrid>,
    observer: &mut (dyn FnMut(&IterationRecord) + Send),
) -> Result<AdaptiveTrace> {
    config.validate()?;
    let ell = disc.check_ellipticity()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let mut runner = Runner {
            disc,
            config,
            reference,
            a_min: ell.a_min,
            cache: SolveCache::new(),
            interp: SparseInterpolant::new(NodeFamily::new(config.nodes), disc.dim(), disc.dofs()),
            start: Instant::now(),
        };
        match config.strategy {
            Strategy::Gg => runner.run_gg(observer),
            Strategy::GnEnvelope | Strategy::GnProfit => runner.run_gn(observer),
        }
    })
}

pub fn run(disc: &Discretization, config: &AdaptiveConfig) -> Result<AdaptiveTrace> {
    run_with(disc, config, None, &mut |_| {})
}

fn with_strategy(config: &AdaptiveConfig, strategy: Strategy) -> AdaptiveConfig {
    AdaptiveConfig {
        strategy,
        ..config.clone()
    }
}

pub fn run_gg(disc: &Discretization, config: &AdaptiveConfig) -> Result<AdaptiveTrace> {
    run(disc, &with_strategy(config, Strategy::Gg))
}

pub fn run_gn(disc: &Discretization, config: &AdaptiveConfig) -> Result<AdaptiveTrace> {
    run(disc, &with_strategy(config, Strategy::GnEnvelope))
}

pub fn run_gn_profit(disc: &Discretization, config: &AdaptiveConfig) -> Result<AdaptiveTrace> {
    run(disc, &with_strategy(config, Strategy::GnProfit))
}

struct Runner<'a> {
    disc: &'a Discretization,
    config: &'a AdaptiveConfig,
    reference: Option<&'a ReferenceGrid>,
    a_min: f64,
    cache: SolveCache,
    interp: SparseInterpolant,
    start: Instant,
}

impl Runner<'_> {
    /// Adds `i` using (possibly cached) solves at `Y_i^+`.
    fn add(&mut self, i: &MultiIndex) -> Result<()> {
        let sols = increment_solutions(self.interp.family(), self.disc, &self.cache, i)?;
        let values: Vec<Vec<f64>> = sols.iter().map(|v| v.to_vec()).collect();
        self.interp.add_index_with_values(i, &values)?;
        Ok(())
    }

    fn reference_error(&self, n: usize, last: bool) -> Option<f64> {
        let every = self.config.reference_every;
        let grid = self.reference?;
        (every > 0 && (n % every == 0 || last)).then(|| grid.error(&self.interp, self.disc))
    }

    fn record(
        &self,
        n: usize,
        report: EstimatorReport,
        candidates: usize,
        reference_error: Option<f64>,
        scale: f64,
    ) -> IterationRecord {
        let effectivity = reference_error.map(|e| report.total / (scale * e));
        IterationRecord {
            n,
            index_set: self.interp.index_set().to_sorted_vec(),
            candidates,
            selected: None,
            marked: Vec::new(),
            report,
            solves: self.cache.solves(),
            grid_size: self.interp.num_points(),
            reference_error,
            effectivity,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        }
    }

    fn log(&self, r: &IterationRecord) {
        match r.reference_error {
            Some(e) => log::info!(
                "{} n={} |Λ|={} solves={} total_eta={:.3e} ref_err={:.3e}",
                self.config.strategy,
                r.n,
                r.index_set.len(),
                r.solves,
                r.report.total,
                e
            ),
            None => log::info!(
                "{} n={} |Λ|={} solves={} total_eta={:.3e}",
                self.config.strategy,
                r.n,
                r.index_set.len(),
                r.solves,
                r.report.total
            ),
        }
        if let Some(c) = r.report.margin_ratio {
            log::debug!("margin/reduced-margin estimator ratio {c:.3}");
        }
    }

    fn finish(
        &mut self,
        records: Vec<IterationRecord>,
        status: Status,
        augmentation: Option<Augmentation>,
    ) -> AdaptiveTrace {
        AdaptiveTrace {
            strategy: self.config.strategy,
            status,
            records,
            interpolant: self.interp.clone(),
            a_min: self.a_min,
            augmentation,
        }
    }

    fn emit(
        &self,
        records: &mut Vec<IterationRecord>,
        rec: IterationRecord,
        observer: &mut (dyn FnMut(&IterationRecord) + Send),
    ) {
        self.log(&rec);
        observer(&rec);
        records.push(rec);
    }

    fn run_gn(
        &mut self,
        observer: &mut (dyn FnMut(&IterationRecord) + Send),
    ) -> Result<AdaptiveTrace> {
        let dim = self.disc.dim();
        self.add(&MultiIndex::zeros(dim))?;
        let mut records = Vec::new();
        for n in 0.. {
            let report = residual_report(&self.interp, self.disc, &self.config.norm)?;
            let candidates = report.entries.len();
            let converged = report.total <= self.config.tolerance;
            let out_of_iterations = n >= self.config.max_iterations;
            let pick = if self.config.strategy == Strategy::GnProfit {
                report.argmax_by(|e| e.profit)
            } else {
                report.argmax_by(|e| e.eta)
            }
            .map(|e| e.index.clone())
            .expect("the margin of a nonempty set is nonempty");
            let marked: Vec<MultiIndex> = self
                .interp
                .index_set()
                .monotone_envelope(&pick)?
                .into_iter()
                .collect();
            let new_solves: usize = marked.iter().map(|i| work(self.config.nodes, i)).sum();
            let out_of_solves = self.cache.solves() + new_solves > self.config.max_solves;
            let last = converged || out_of_iterations || out_of_solves;

            let err = self.reference_error(n, last);
            let mut rec = self.record(n, report, candidates, err, self.a_min);
            if last {
                self.emit(&mut records, rec, observer);
                let status = if converged {
                    Status::Converged
                } else {
                    Status::BudgetExhausted
                };
                return Ok(self.finish(records, status, None));
            }
            rec.selected = Some(pick);
            rec.marked = marked.clone();
            self.emit(&mut records, rec, observer);
            // lexicographic order adds predecessors first
            for i in &marked {
                self.add(i)?;
            }
        }
        unreachable!()
    }

    fn gg_report(&self) -> Result<EstimatorReport> {
        let set = self.interp.index_set();
        let candidates: Vec<MultiIndex> = set.reduced_margin()?.iter().cloned().collect();
        let etas: Vec<f64> = candidates
            .par_iter()
            .map(|k| surplus_indicator(&self.interp, self.disc, &self.cache, k, &self.config.norm))
            .collect::<Result<_>>()?;
        EstimatorReport::new(
            set,
            self.config.nodes,
            candidates.into_iter().zip(etas).collect(),
        )
    }

    fn gg_mark(&self, report: &EstimatorReport) -> Vec<MultiIndex> {
        match self.config.doerfler_fraction {
            None => vec![report
                .argmax_by(|e| e.eta)
                .expect("nonempty reduced margin")
                .index
                .clone()],
            Some(theta) => {
                let mut order: Vec<_> = report.entries.iter().collect();
                // stable sort keeps lexicographic order among equal values
                order.sort_by(|a, b| b.eta.total_cmp(&a.eta));
                let mut acc = 0.0;
                let mut marked = Vec::new();
                for e in order {
                    marked.push(e.index.clone());
                    acc += e.eta;
                    if acc >= theta * report.total {
                        break;
                    }
                }
                marked.sort();
                marked
            }
        }
    }

    fn run_gg(
        &mut self,
        observer: &mut (dyn FnMut(&IterationRecord) + Send),
    ) -> Result<AdaptiveTrace> {
        let dim = self.disc.dim();
        self.add(&MultiIndex::zeros(dim))?;
        let mut records = Vec::new();
        let mut status = Status::BudgetExhausted;
        for n in 0.. {
            let report = self.gg_report()?;
            let candidates = report.entries.len();
            let converged = report.total <= self.config.tolerance;
            let out_of_iterations = n >= self.config.max_iterations;
            let out_of_solves = self.cache.solves() >= self.config.max_solves;
            let last = converged || out_of_iterations || out_of_solves;
            let err = self.reference_error(n, last);
            let mut rec = self.record(n, report, candidates, err, 1.0);
            if last {
                self.emit(&mut records, rec, observer);
                if converged {
                    status = Status::Converged;
                }
                break;
            }
            let marked = self.gg_mark(&rec.report);
            rec.selected = rec.report.argmax_by(|e| e.eta).map(|e| e.index.clone());
            rec.marked = marked.clone();
            self.emit(&mut records, rec, observer);
            for i in &marked {
                self.add(i)?;
            }
        }
        // every reduced-margin solve is cached, so this costs no new solves
        let rmarg: Vec<MultiIndex> = self
            .interp
            .index_set()
            .reduced_margin()?
            .iter()
            .cloned()
            .collect();
        for i in &rmarg {
            self.add(i)?;
        }
        let reference_error = (self.config.reference_every > 0)
            .then(|| self.reference.map(|g| g.error(&self.interp, self.disc)))
            .flatten();
        let augmentation = Augmentation {
            index_set_size: self.interp.index_set().len(),
            grid_size: self.interp.num_points(),
            solves: self.cache.solves(),
            reference_error,
        };
        log::info!(
            "GG augmented to |Λ|={} grid={} solves={}",
            augmentation.index_set_size,
            augmentation.grid_size,
            augmentation.solves
        );
        Ok(self.finish(records, status, Some(augmentation)))
    }
}

/// Checks the structural invariants of a trace: monotone, strictly nested
/// index sets, non-decreasing solve counts, marked sets containing `k*`, and
/// argmax marking (`max` over unmarked candidates `≤ Σ` over marked).
pub fn check_trace(trace: &AdaptiveTrace) -> std::result::Result<(), String> {
    let mut prev: Option<&IterationRecord> = None;
    for r in &trace.records {
        let set = MonotoneIndexSet::from_indices(r.index_set[0].dim(), r.index_set.iter().cloned())
            .map_err(|e| format!("n={}: index set not monotone: {e}", r.n))?;
        if let Some(p) = prev {
            let before: BTreeMap<&MultiIndex, ()> = p.index_set.iter().map(|k| (k, ())).collect();
            if !(p.index_set.len() < r.index_set.len() && before.keys().all(|k| set.contains(k))) {
                return Err(format!("n={}: index sets not strictly nested", r.n));
            }
            if r.solves < p.solves {
                return Err(format!("n={}: solve count decreased", r.n));
            }
            let expected: Vec<MultiIndex> = {
                let mut v = p.index_set.clone();
                v.extend(p.marked.iter().cloned());
                v.sort();
                v
            };
            if expected != r.index_set {
                return Err(format!("n={}: Λ_n is not Λ_(n-1) ∪ Mark_(n-1)", r.n));
            }
        }
        if let Some(k) = &r.selected {
            if !r.marked.contains(k) {
                return Err(format!("n={}: k* {k} not marked", r.n));
            }
            let marked_sum: f64 = r
                .marked
                .iter()
                .map(|i| r.report.eta(i).unwrap_or(0.0))
                .sum();
            let unmarked_max = r
                .report
                .entries
                .iter()
                .filter(|e| !r.marked.contains(&e.index))
                .map(|e| e.eta)
                .fold(0.0, f64::max);
            if unmarked_max > marked_sum && trace.strategy != Strategy::GnProfit {
                return Err(format!("n={}: unmarked estimator exceeds marked sum", r.n));
            }
        }
        prev = Some(r);
    }
    Ok(())
}
