//! Fast consistency checks runnable from the command line.

use crate::adaptive::{check_trace, run_with, AdaptiveConfig, Strategy};
use crate::error::Result;
use crate::estimators::{detail_flux_norm, NormSpec, ReferenceGrid};
use crate::fem::{DiffusionProblem, Discretization, Field};
use crate::interp::{detail_apply_ct, SparseInterpolant};
use crate::multiindex::{MonotoneIndexSet, MultiIndex};
use crate::nodes::{lebesgue_constant, leja_nodes, NodeFamily, NodeKind};
use crate::tensor::TensorIter;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult {
            name,
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn smooth(y: &[f64]) -> Vec<f64> {
    let s: f64 = y.iter().enumerate().map(|(m, v)| v / (m + 2) as f64).sum();
    vec![1.0 / (2.0 + s), s.exp()]
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("leja_first_points", || {
            let y = leja_nodes(5);
            let expect = [-1.0, 1.0, 0.0, -0.57735, 0.65871];
            let dev = y
                .iter()
                .zip(expect)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok((dev < 1e-4, format!("max deviation {dev:.2e}")))
        }),
        check("lebesgue_bounds", || {
            let leja = lebesgue_constant(NodeKind::Leja, 10, 2000);
            let rleja = lebesgue_constant(NodeKind::RLeja, 10, 2000);
            let cc = lebesgue_constant(NodeKind::ClenshawCurtis, 4, 2000);
            let ok = leja <= 500.0 * 10f64.ln()
                && rleja <= 20.0
                && cc <= 1.0 + 8.0 * 2f64.ln() / std::f64::consts::PI;
            Ok((ok, format!("leja {leja:.3} rleja {rleja:.3} cc {cc:.3}")))
        }),
        check("interpolatory_and_combination_technique", || {
            let kinds = [NodeKind::Leja, NodeKind::ClenshawCurtis];
            let mut worst: f64 = 0.0;
            for kind in kinds {
                let fam = NodeFamily::new(kind);
                let set: Vec<MultiIndex> = TensorIter::new(&[3, 3])
                    .map(|p| MultiIndex::new(vec![p[0] as u32, p[1] as u32]))
                    .collect();
                let mut interp = SparseInterpolant::new(fam.clone(), 2, 2);
                let full = MonotoneIndexSet::from_indices(2, set.iter().cloned())?;
                for i in full.iter() {
                    interp.add_index(i, |g| smooth(&g.coords))?;
                }
                for g in interp.grid_points() {
                    let v = interp.evaluate(&g.coords)?;
                    for (a, b) in v.iter().zip(smooth(&g.coords)) {
                        worst = worst.max((a - b).abs() / b.abs().max(1.0));
                    }
                }
                for i in &set {
                    let ct = detail_apply_ct(&fam, i, 2, |g| smooth(&g.coords));
                    let hier = interp.detail(i).expect("index in set");
                    for y in [[0.3, -0.6], [-0.95, 0.8]] {
                        for (a, b) in ct.evaluate(&y)?.iter().zip(hier.evaluate(&y)?) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                }
            }
            Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
        }),
        check("fem_closed_form", || {
            let p = DiffusionProblem {
                a0: Field::Constant(2.0),
                fields: vec![Field::Constant(1.0)],
                rhs: Field::Constant(1.0),
            };
            let disc = Discretization::new(&p, 64)?;
            let u = disc.solve_at(&[-1.0])?;
            let dev = u
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = (i + 1) as f64 / 64.0;
                    (v - x * (1.0 - x) / 2.0).abs()
                })
                .fold(0.0, f64::max);
            Ok((dev <= 1e-12, format!("max nodal error {dev:.2e}")))
        }),
        check("estimator_annihilation", || {
            let p = DiffusionProblem {
                a0: Field::Constant(2.0),
                fields: vec![Field::Constant(1.0)],
                rhs: Field::Constant(1.0),
            };
            let disc = Discretization::new(&p, 32)?;
            let mut interp =
                SparseInterpolant::new(NodeFamily::new(NodeKind::Leja), 1, disc.dofs());
            interp.add_index(&MultiIndex::zeros(1), |g| {
                disc.solve_at(&g.coords).expect("elliptic")
            })?;
            let eta = (2..6)
                .map(|k| {
                    detail_flux_norm(&interp, &disc, &MultiIndex::new(vec![k]), &NormSpec::l2())
                })
                .fold(0.0, f64::max);
            Ok((eta <= 1e-12, format!("max eta {eta:.2e}")))
        }),
        check("reliability_small_run", || {
            let p = DiffusionProblem::cosine(2, 1.0, 0.5, 2.0, 1.0);
            let disc = Discretization::new(&p, 64)?;
            let norm = NormSpec::l2();
            let grid = ReferenceGrid::new(&disc, &norm, 12)?;
            let mut cfg = AdaptiveConfig::new(Strategy::GnEnvelope);
            cfg.tolerance = 1e-5;
            cfg.reference_every = 1;
            let trace = run_with(&disc, &cfg, Some(&grid), &mut |_| {})?;
            let min = trace
                .records
                .iter()
                .filter_map(|r| r.effectivity)
                .fold(f64::INFINITY, f64::min);
            let structural = check_trace(&trace);
            Ok((
                min >= 1.0 && structural.is_ok(),
                format!(
                    "min effectivity {min:.3}, {} iterations",
                    trace.records.len()
                ),
            ))
        }),
    ]
}
