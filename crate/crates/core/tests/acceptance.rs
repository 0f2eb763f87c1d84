//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{random_monotone_set, trace_difference, uniform_point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgcol_core::adaptive::{check_trace, run_with};
use sgcol_core::estimators::{detail_flux_norm, residual_estimator};
use sgcol_core::interp::{detail_apply_ct, PolynomialField};
use sgcol_core::nodes::{detail_weights, growth, node_sequence};
use sgcol_core::{
    AdaptiveConfig, AdaptiveTrace, DiffusionProblem, Discretization, Field, MonotoneIndexSet,
    MultiIndex, NodeFamily, NodeKind, NormSpec, ReferenceGrid, SparseInterpolant, Status, Strategy,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// independent univariate helpers

fn lagrange(nodes: &[f64], y: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|i| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| (y - x) / (nodes[i] - x))
                .product()
        })
        .collect()
}

fn log_product(nodes: &[f64], y: f64) -> f64 {
    nodes.iter().map(|&t| (y - t).abs().ln()).sum()
}

/// Next Leja point by a dense scan of `[-1, 1]`, each local scan maximum
/// polished by safeguarded Newton on `Σ 1/(y - y_i) = 0`.
fn leja_oracle_next(nodes: &[f64]) -> f64 {
    let n = 100_000;
    let grid: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&y| log_product(nodes, y)).collect();
    let mut candidates = Vec::new();
    for i in 0..=n {
        let left = if i > 0 {
            vals[i - 1]
        } else {
            f64::NEG_INFINITY
        };
        let right = if i < n {
            vals[i + 1]
        } else {
            f64::NEG_INFINITY
        };
        if vals[i].is_finite() && vals[i] >= left && vals[i] >= right {
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(n)];
            let mut y = grid[i];
            if i > 0 && i < n {
                for _ in 0..100 {
                    let g: f64 = nodes.iter().map(|&t| 1.0 / (y - t)).sum();
                    let dg: f64 = nodes.iter().map(|&t| -1.0 / ((y - t) * (y - t))).sum();
                    let next = (y - g / dg).clamp(lo, hi);
                    if (next - y).abs() <= 1e-16 {
                        break;
                    }
                    y = next;
                }
            }
            candidates.push((log_product(nodes, y), y));
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.0)
        .fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .filter(|c| c.0 >= best - 1e-12 * best.abs().max(1.0))
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min)
}

fn lebesgue_estimate(nodes: &[f64], samples: usize) -> f64 {
    (0..=samples)
        .map(|i| {
            let y = -1.0 + 2.0 * i as f64 / samples as f64;
            lagrange(nodes, y).iter().map(|v| v.abs()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// criteria

fn leja_sequence() -> Outcome {
    let lib = node_sequence(NodeKind::Leja, 13);
    let expect = [-1.0, 1.0, 0.0, -0.57735, 0.65871];
    let first = lib
        .iter()
        .zip(expect)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut oracle = vec![-1.0];
    while oracle.len() < lib.len() {
        oracle.push(leja_oracle_next(&oracle));
    }
    let dev = lib
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(
        first <= 1e-4 && dev <= 1e-10,
        format!("first five within {first:.1e}, oracle deviation up to k=12 {dev:.1e}"),
    )
}

fn lebesgue_bounds() -> Outcome {
    let samples = 20_000;
    let mut worst = Vec::new();
    let mut failures = Vec::new();
    let mut check =
        |kind: NodeKind, levels: std::ops::RangeInclusive<usize>, bound: &dyn Fn(f64) -> f64| {
            let mut max_ratio: f64 = 0.0;
            for k in levels {
                let nodes = node_sequence(kind, growth(kind, k) + 1);
                let lambda = lebesgue_estimate(&nodes, samples);
                let b = bound(k as f64);
                max_ratio = max_ratio.max(lambda / b);
                if lambda > b {
                    failures.push(format!("{kind} k={k}: {lambda:.3} > {b:.3}"));
                }
            }
            worst.push(format!("{kind} max ratio {max_ratio:.3}"));
        };
    check(NodeKind::Leja, 2..=30, &|k| 5.0 * k * k * k.ln());
    check(NodeKind::RLeja, 1..=30, &|k| 2.0 * k);
    check(NodeKind::ClenshawCurtis, 1..=6, &|k| {
        1.0 + 2.0 * 2f64.ln() / PI * k
    });
    let detail = format!(
        "{}{}",
        worst.join(", "),
        if failures.is_empty() {
            String::new()
        } else {
            format!("; {}", failures.join("; "))
        }
    );
    ensure(failures.is_empty(), detail)
}

fn positive_field(y: &[f64]) -> Vec<f64> {
    let s: f64 = y.iter().enumerate().map(|(m, v)| v / (m + 2) as f64).sum();
    vec![1.0 / (2.5 + s), s.exp(), 3.0 + (3.0 * s).cos()]
}

fn interpolation_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let (mut interp_err, mut mono_err): (f64, f64) = (0.0, 0.0);
    let mut monomials = 0;
    for case in 0..200 {
        let kind = if case % 2 == 0 {
            NodeKind::Leja
        } else {
            NodeKind::ClenshawCurtis
        };
        let dim = 1 + case % 3;
        let size = 1 + (case * 7) % 30;
        let max_entry = if kind == NodeKind::Leja { 20 } else { 5 };
        let set = random_monotone_set(&mut rng, dim, size, max_entry);
        let family = NodeFamily::new(kind);
        let order = set.to_sorted_vec();

        let interp = common::build(&family, &order, 3, positive_field);
        for g in interp.grid_points() {
            let v = interp.evaluate(&g.coords).map_err(|e| e.to_string())?;
            for (a, b) in v.iter().zip(positive_field(&g.coords)) {
                interp_err = interp_err.max((a - b).abs() / b.abs());
            }
        }

        // The node indices of Y_Λ are exactly the exponents spanning P_Λ;
        // one output per monomial, in chunks to bound memory.
        let exponents = interp.point_indices().to_vec();
        let points: Vec<Vec<f64>> = (0..10).map(|_| uniform_point(&mut rng, dim)).collect();
        for chunk in exponents.chunks(64) {
            let len = chunk.len();
            let poly = PolynomialField {
                dim,
                terms: chunk
                    .iter()
                    .enumerate()
                    .map(|(c, e)| {
                        let mut coef = vec![0.0; len];
                        coef[c] = 1.0;
                        (e.clone(), coef)
                    })
                    .collect(),
            };
            let interp = common::build(&family, &order, len, |y| poly.evaluate(y));
            for y in &points {
                let v = interp.evaluate(y).map_err(|e| e.to_string())?;
                mono_err = mono_err.max(common::max_abs_diff(&v, &poly.evaluate(y)));
            }
            monomials += len;
        }
    }
    ensure(
        interp_err <= 1e-10 && mono_err <= 1e-10,
        format!(
            "nodal relative error {interp_err:.1e}, error on {monomials} monomials {mono_err:.1e}"
        ),
    )
}

/// `I_k f(y)` as a tensor Lagrange interpolant built from scratch.
fn tensor_lagrange(
    kind: NodeKind,
    k: &[usize],
    f: impl Fn(&[f64]) -> Vec<f64>,
    y: &[f64],
) -> Vec<f64> {
    let axes: Vec<Vec<f64>> = k
        .iter()
        .map(|&l| node_sequence(kind, growth(kind, l) + 1))
        .collect();
    let weights: Vec<Vec<f64>> = axes.iter().zip(y).map(|(a, &t)| lagrange(a, t)).collect();
    let mut out = vec![0.0; 3];
    for a in 0..axes[0].len() {
        for b in 0..axes[1].len() {
            let w = weights[0][a] * weights[1][b];
            for (o, v) in out.iter_mut().zip(f(&[axes[0][a], axes[1][b]])) {
                *o += w * v;
            }
        }
    }
    out
}

fn telescoping_and_combination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Vec<f64>> = (0..50).map(|_| uniform_point(&mut rng, 2)).collect();
    let (mut tele, mut ct): (f64, f64) = (0.0, 0.0);
    for kind in [NodeKind::Leja, NodeKind::ClenshawCurtis] {
        let family = NodeFamily::new(kind);
        let boxed: Vec<MultiIndex> = (0..=4u32)
            .flat_map(|a| (0..=4u32).map(move |b| MultiIndex::new(vec![a, b])))
            .collect();
        let full = MonotoneIndexSet::from_indices(2, boxed.clone()).map_err(|e| e.to_string())?;
        let interp = common::build(&family, &full.to_sorted_vec(), 3, positive_field);
        let details: BTreeMap<&MultiIndex, _> = boxed
            .iter()
            .map(|i| (i, interp.detail(i).unwrap()))
            .collect();
        for k in &boxed {
            let cd = detail_apply_ct(&family, k, 3, |g| positive_field(&g.coords));
            for y in &points {
                let mut sum = vec![0.0; 3];
                for i in boxed.iter().filter(|i| MultiIndex::le(i, k)) {
                    for (s, d) in sum.iter_mut().zip(details[i].evaluate(y).unwrap()) {
                        *s += d;
                    }
                }
                let kk = [k.get(0), k.get(1)];
                tele = tele.max(common::max_abs_diff(
                    &sum,
                    &tensor_lagrange(kind, &kk, positive_field, y),
                ));
                let surplus = details[k].evaluate(y).unwrap();
                ct = ct.max(common::max_abs_diff(&cd.evaluate(y).unwrap(), &surplus));
            }
        }
    }
    ensure(
        tele <= 1e-10 && ct <= 1e-10,
        format!("telescoping deviation {tele:.1e}, CT vs surplus {ct:.1e}"),
    )
}

fn tensorization() -> Outcome {
    let family = NodeFamily::new(NodeKind::Leja);
    let samples = 200;
    let axis: Vec<f64> = (0..samples)
        .map(|i| -1.0 + 2.0 * i as f64 / (samples - 1) as f64)
        .collect();
    let univariate: Vec<f64> = (0..=4usize)
        .map(|k| {
            let mut w = vec![0.0; growth(NodeKind::Leja, k) + 1];
            axis.iter()
                .map(|&y| {
                    detail_weights(&family, k, y, &mut w);
                    w.iter().map(|v| v.abs()).sum::<f64>()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i1 in 0..=4u32 {
        for i2 in 0..=4u32 {
            let k = MultiIndex::new(vec![i1, i2]);
            // Δ_k applied to the indicator vectors of its tensor grid gives the
            // cardinal weights of every grid value at once.
            let count = ((i1 + 1) * (i2 + 1)) as usize;
            let mut next = 0;
            let cd = detail_apply_ct(&family, &k, count, |_| {
                let mut e = vec![0.0; count];
                e[next] = 1.0;
                next += 1;
                e
            });
            let mut norm: f64 = 0.0;
            for &y1 in &axis {
                for &y2 in &axis {
                    let w = cd.evaluate(&[y1, y2]).map_err(|e| e.to_string())?;
                    norm = norm.max(w.iter().map(|v| v.abs()).sum());
                }
            }
            let product = univariate[i1 as usize] * univariate[i2 as usize];
            worst = worst.max((norm / product - 1.0).abs());
        }
    }
    ensure(
        worst <= 0.02,
        format!("max relative mismatch {worst:.2e} over i ≤ (4,4)"),
    )
}

fn default_problem(dim: usize, elements: usize) -> Discretization {
    Discretization::new(&DiffusionProblem::cosine(dim, 1.0, 0.5, 2.0, 1.0), elements).unwrap()
}

fn run_traced(
    disc: &Discretization,
    strategy: Strategy,
    norm: NormSpec,
    grid: &ReferenceGrid,
) -> Result<AdaptiveTrace, String> {
    let mut cfg = AdaptiveConfig::new(strategy);
    cfg.norm = norm;
    cfg.reference_every = 1;
    run_with(disc, &cfg, Some(grid), &mut |_| {}).map_err(|e| e.to_string())
}

struct Runs {
    gn_m2: Option<(AdaptiveTrace, Discretization, ReferenceGrid)>,
}

fn reliability(runs: &mut Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for dim in 1..=3 {
        let disc = default_problem(dim, 256);
        for norm in [NormSpec::l2(), NormSpec::sup()] {
            let grid = ReferenceGrid::new(&disc, &norm, 20).map_err(|e| e.to_string())?;
            let trace = run_traced(&disc, Strategy::GnEnvelope, norm, &grid)?;
            let mut min_eff = f64::INFINITY;
            for r in &trace.records {
                let err = r.reference_error.ok_or("missing reference error")?;
                let bound = r.report.total / trace.a_min;
                ok &= err < bound;
                min_eff = min_eff.min(bound / err);
            }
            let p = if norm.is_sup() { "inf" } else { "2" };
            lines.push(format!(
                "M={dim} p={p}: min effectivity {min_eff:.3} over {} iterations",
                trace.records.len()
            ));
            if dim == 2 && !norm.is_sup() {
                runs.gn_m2 = Some((trace, disc.clone(), grid));
            }
        }
    }
    ensure(ok, lines.join("; "))
}

fn gn_convergence(runs: &Runs) -> Outcome {
    let (trace, _, _) = runs.gn_m2.as_ref().ok_or("reliability run missing")?;
    let last = trace.last();
    let err = last.reference_error.ok_or("missing reference error")?;
    let bound = 1e-8 / trace.a_min;
    ensure(
        trace.status == Status::Converged
            && last.report.total < 1e-8
            && last.n <= 200
            && err < bound,
        format!(
            "{:?} after {} iterations, total {:.2e}, error {err:.2e} (bound {bound:.2e})",
            trace.status, last.n, last.report.total
        ),
    )
}

/// Cumulative solves at which a trace first reaches reference error `target`.
fn solves_to_reach(trace: &AdaptiveTrace, target: f64) -> Option<usize> {
    let mut points: Vec<(usize, f64)> = trace
        .records
        .iter()
        .filter_map(|r| r.reference_error.map(|e| (r.solves, e)))
        .collect();
    if let Some(a) = &trace.augmentation {
        points.extend(a.reference_error.map(|e| (a.solves, e)));
    }
    points.into_iter().find(|p| p.1 <= target).map(|p| p.0)
}

fn gg_convergence(runs: &Runs) -> Outcome {
    let (gn, disc, grid) = runs.gn_m2.as_ref().ok_or("reliability run missing")?;
    let gg = run_traced(disc, Strategy::Gg, NormSpec::l2(), grid)?;
    check_trace(&gg)?;
    let last = gg.last();
    let pre = last.reference_error.ok_or("missing reference error")?;
    let post = gg
        .final_reference_error()
        .ok_or("missing reference error")?;
    let gn_err = gn
        .final_reference_error()
        .ok_or("missing reference error")?;
    let common_err = gn_err.max(post);
    let gn_solves = solves_to_reach(gn, common_err).ok_or("GN never reached the common error")?;
    let gg_solves = solves_to_reach(&gg, common_err).ok_or("GG never reached the common error")?;
    ensure(
        gg.status == Status::Converged && last.report.total <= 1e-8 && post <= 1e-6 && pre <= 1e-6 && gn_solves <= gg_solves,
        format!(
            "indicator sum {:.2e}, error {pre:.2e} ({post:.2e} augmented); solves to reach {common_err:.2e}: GN {gn_solves}, GG {gg_solves}",
            last.report.total
        ),
    )
}

fn annihilation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut seed = 0u64;
    while cases < 50 {
        seed += 1;
        let dim = 2 + (seed % 2) as usize;
        let kind = if seed % 3 == 0 {
            NodeKind::ClenshawCurtis
        } else {
            NodeKind::Leja
        };
        let mut problem = DiffusionProblem::cosine(dim, 1.0, 0.5, 2.0, 1.0);
        let zero = (seed as usize) % dim;
        problem.fields[zero] = Field::Constant(0.0);
        let disc = Discretization::new(&problem, 64).map_err(|e| e.to_string())?;
        let set = random_monotone_set(&mut rng, dim, 1 + (seed as usize * 5) % 12, 3);
        let family = NodeFamily::new(kind);
        let mut interp = SparseInterpolant::new(family.clone(), dim, disc.dofs());
        for k in set.to_sorted_vec() {
            interp
                .add_index(&k, |g| disc.solve_at(&g.coords).unwrap())
                .map_err(|e| e.to_string())?;
        }
        // degree of a ∇u_n in y_m: that of u_n (zero along the inactive
        // parameter) plus one where a depends on y_m
        let degree: Vec<usize> = (0..dim)
            .map(|m| {
                if m == zero {
                    0
                } else {
                    set.iter().map(|k| growth(kind, k.get(m))).max().unwrap() + 1
                }
            })
            .collect();
        let annihilated = |k: &MultiIndex| {
            (0..dim).any(|m| k.get(m) >= 1 && growth(kind, k.get(m) - 1) >= degree[m])
        };

        // a margin index along the inactive parameter
        let along = set
            .margin()
            .unwrap()
            .iter()
            .find(|k| k.get(zero) >= 1)
            .cloned()
            .unwrap();
        assert!(annihilated(&along));
        let eta = residual_estimator(&interp, &disc, &along, &NormSpec::l2())
            .map_err(|e| e.to_string())?;
        worst = worst.max(eta);
        cases += 1;

        // an index beyond the margin in an active direction
        let active = (zero + 1) % dim;
        let mut beyond = MultiIndex::zeros(dim);
        while !annihilated(&beyond) {
            beyond = beyond.forward(active);
        }
        let norm = if seed % 2 == 0 {
            NormSpec::l2()
        } else {
            NormSpec::sup()
        };
        worst = worst.max(detail_flux_norm(&interp, &disc, &beyond, &norm));
        cases += 1;
    }
    ensure(
        worst <= 1e-12,
        format!("max η {worst:.1e} over {cases} cases"),
    )
}

fn determinism() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let cases = [
        (2, NormSpec::l2(), 1e-8),
        (2, NormSpec::sup(), 1e-7),
        (3, NormSpec::l2(), 1e-5),
    ];
    for (dim, norm, tol) in cases {
        let disc = default_problem(dim, 256);
        let grid = ReferenceGrid::new(&disc, &norm, 12).map_err(|e| e.to_string())?;
        for strategy in Strategy::ALL {
            let mut cfg = AdaptiveConfig::new(strategy);
            cfg.norm = norm;
            cfg.tolerance = tol;
            cfg.reference_every = 5;
            let serial =
                run_with(&disc, &cfg, Some(&grid), &mut |_| {}).map_err(|e| e.to_string())?;
            let again =
                run_with(&disc, &cfg, Some(&grid), &mut |_| {}).map_err(|e| e.to_string())?;
            cfg.parallelism = 8;
            let parallel =
                run_with(&disc, &cfg, Some(&grid), &mut |_| {}).map_err(|e| e.to_string())?;
            for (label, other) in [("repeat", &again), ("parallel", &parallel)] {
                if let Some(diff) = trace_difference(&serial, other) {
                    ok = false;
                    lines.push(format!("M={dim} {strategy} {label}: {diff}"));
                }
            }
        }
    }
    if ok {
        lines.push("9 configurations identical across repeats and 1 vs 8 threads".into());
    }
    ensure(ok, lines.join("; "))
}

fn main() -> ExitCode {
    let mut runs = Runs { gn_m2: None };
    let mut failed = 0;
    let mut report = |n: usize, name: &str, limit: u64, outcome: Outcome, elapsed: Duration| {
        let within = elapsed <= Duration::from_secs(limit);
        let (tag, detail) = match (&outcome, within) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; exceeded {limit} s")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "{tag} criterion {n:>2} {name}: {detail} [{:.1} s]",
            elapsed.as_secs_f64()
        );
    };

    macro_rules! criterion {
        ($n:expr, $name:expr, $limit:expr, $body:expr) => {{
            let start = Instant::now();
            let outcome = $body;
            report($n, $name, $limit, outcome, start.elapsed());
        }};
    }

    criterion!(1, "leja sequence", 5, leja_sequence());
    criterion!(2, "lebesgue bounds", 10, lebesgue_bounds());
    criterion!(3, "interpolation suite", 30, interpolation_suite());
    criterion!(
        4,
        "telescoping and combination technique",
        10,
        telescoping_and_combination()
    );
    criterion!(5, "detail norm tensorization", 20, tensorization());
    criterion!(6, "estimator reliability", 180, reliability(&mut runs));
    criterion!(7, "residual-driven convergence", 120, gn_convergence(&runs));
    criterion!(8, "surplus-driven convergence", 180, gg_convergence(&runs));
    criterion!(9, "estimator annihilation", 10, annihilation());
    criterion!(10, "determinism", 120, determinism());

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
