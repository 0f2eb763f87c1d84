//! Affine parametric diffusion on `D = (0, 1)` with P1 finite elements.
//!
//! `-(a(x,y) u')' = f`, `u(0) = u(1) = 0`, `a(x,y) = a_0(x) + Σ_m a_m(x) y_m`.
//! The mesh is uniform with `N` elements; coefficients are sampled at element
//! midpoints, so `a(·,y) u_h'(·,y)` is constant on every element. The load
//! uses element averages of `f`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

/// A scalar function on `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Field {
    Constant(f64),
    /// `amplitude · cos(frequency · π x)`
    Cosine {
        amplitude: f64,
        frequency: f64,
    },
    /// `value` on `[lo, hi)`, zero elsewhere.
    Indicator {
        value: f64,
        lo: f64,
        hi: f64,
    },
}

impl Field {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Field::Constant(c) => c,
            Field::Cosine {
                amplitude,
                frequency,
            } => amplitude * (frequency * PI * x).cos(),
            Field::Indicator { value, lo, hi } => {
                if (lo..hi).contains(&x) {
                    value
                } else {
                    0.0
                }
            }
        }
    }

    /// Mean value over `[a, b]`.
    pub fn average(&self, a: f64, b: f64) -> f64 {
        let len = b - a;
        match *self {
            Field::Constant(c) => c,
            Field::Cosine {
                amplitude,
                frequency,
            } => {
                if frequency == 0.0 {
                    amplitude
                } else {
                    let w = frequency * PI;
                    amplitude * ((w * b).sin() - (w * a).sin()) / (w * len)
                }
            }
            Field::Indicator { value, lo, hi } => value * (b.min(hi) - a.max(lo)).max(0.0) / len,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Field::Constant(c) => c == 0.0,
            Field::Cosine { amplitude, .. } => amplitude == 0.0,
            Field::Indicator { value, lo, hi } => value == 0.0 || hi <= lo,
        }
    }
}

/// `a_0`, the parametric fields `a_1..a_M`, and the load `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionProblem {
    pub a0: Field,
    pub fields: Vec<Field>,
    pub rhs: Field,
}

impl DiffusionProblem {
    /// `a_m(x) = γ m^{-σ} cos(mπx)`, constant `a_0` and `f`.
    pub fn cosine(dim: usize, a0: f64, gamma: f64, sigma: f64, rhs: f64) -> Self {
        let fields = (1..=dim)
            .map(|m| Field::Cosine {
                amplitude: gamma * (m as f64).powf(-sigma),
                frequency: m as f64,
            })
            .collect();
        DiffusionProblem {
            a0: Field::Constant(a0),
            fields,
            rhs: Field::Constant(rhs),
        }
    }

    /// `a_m = γ` on the `m`-th of `M` equal subintervals of `(0, 1)`.
    pub fn inclusions(dim: usize, a0: f64, gamma: f64, rhs: f64) -> Self {
        let fields = (0..dim)
            .map(|m| Field::Indicator {
                value: gamma,
                lo: m as f64 / dim as f64,
                hi: (m + 1) as f64 / dim as f64,
            })
            .collect();
        DiffusionProblem {
            a0: Field::Constant(a0),
            fields,
            rhs: Field::Constant(rhs),
        }
    }

    /// Constant `a_0`, all `a_m ≡ 0`.
    pub fn deterministic(dim: usize, a0: f64, rhs: f64) -> Self {
        DiffusionProblem {
            a0: Field::Constant(a0),
            fields: vec![Field::Constant(0.0); dim],
            rhs: Field::Constant(rhs),
        }
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    /// `a(x, y)`.
    pub fn coefficient(&self, x: f64, y: &[f64]) -> f64 {
        self.a0.eval(x)
            + self
                .fields
                .iter()
                .zip(y)
                .map(|(a, v)| a.eval(x) * v)
                .sum::<f64>()
    }
}

/// Constants of uniform ellipticity measured at the element midpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ellipticity {
    pub a_min: f64,
    pub a_max: f64,
    /// `1 - a_min / inf a_0`
    pub alpha: f64,
    /// Largest `r` with `Σ|a_m| ≤ a_0 - r` on the mesh; equals `a_min`.
    pub r_effective: f64,
}

/// Uniform mesh with midpoint coefficient samples and element-average loads.
#[derive(Clone, Debug)]
pub struct Discretization {
    elements: usize,
    h: f64,
    /// `coeffs[0]` is `a_0`; `coeffs[m]` is `a_m`, each sampled per element.
    coeffs: Vec<Vec<f64>>,
    /// Load vector on interior nodes.
    load: Vec<f64>,
}

impl Discretization {
    pub fn new(problem: &DiffusionProblem, elements: usize) -> Result<Self> {
        if elements < 2 {
            return Err(Error::Config(format!(
                "mesh needs at least 2 elements, got {elements}"
            )));
        }
        let h = 1.0 / elements as f64;
        let mid: Vec<f64> = (0..elements).map(|e| (e as f64 + 0.5) * h).collect();
        let coeffs = std::iter::once(&problem.a0)
            .chain(&problem.fields)
            .map(|f| mid.iter().map(|&x| f.eval(x)).collect())
            .collect();
        let avg: Vec<f64> = (0..elements)
            .map(|e| problem.rhs.average(e as f64 * h, (e + 1) as f64 * h))
            .collect();
        let load = (1..elements)
            .map(|i| 0.5 * h * (avg[i - 1] + avg[i]))
            .collect();
        Ok(Discretization {
            elements,
            h,
            coeffs,
            load,
        })
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Number of interior nodes, the length of solution vectors.
    pub fn dofs(&self) -> usize {
        self.elements - 1
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.elements)
            .map(|e| (e as f64 + 0.5) * self.h)
            .collect()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.elements).map(|i| i as f64 * self.h).collect()
    }

    /// Midpoint samples of `a_m` (`m = 0` is the mean field).
    pub fn field_samples(&self, m: usize) -> &[f64] {
        &self.coeffs[m]
    }

    pub fn check_ellipticity(&self) -> Result<Ellipticity> {
        let mid = self.midpoints();
        let mut a_min = f64::INFINITY;
        let mut worst = 0;
        let mut a_max = f64::NEG_INFINITY;
        let mut a0_inf = f64::INFINITY;
        for e in 0..self.elements {
            let spread: f64 = self.coeffs[1..].iter().map(|c| c[e].abs()).sum();
            let lo = self.coeffs[0][e] - spread;
            if lo < a_min {
                a_min = lo;
                worst = e;
            }
            a_max = a_max.max(self.coeffs[0][e] + spread);
            a0_inf = a0_inf.min(self.coeffs[0][e]);
        }
        if a_min <= 0.0 {
            return Err(Error::Ellipticity {
                x: mid[worst],
                value: a_min,
            });
        }
        Ok(Ellipticity {
            a_min,
            a_max,
            alpha: 1.0 - a_min / a0_inf,
            r_effective: a_min,
        })
    }

    /// Element values of `a(·, y)`.
    pub fn coefficient_at(&self, y: &[f64]) -> Vec<f64> {
        let mut a = self.coeffs[0].clone();
        for (c, &v) in self.coeffs[1..].iter().zip(y) {
            if v != 0.0 {
                for (ae, ce) in a.iter_mut().zip(c) {
                    *ae += ce * v;
                }
            }
        }
        a
    }

    /// P1 solution on the interior nodes for parameter `y`.
    pub fn solve_at(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: y.len(),
            });
        }
        let a = self.coefficient_at(y);
        let n = self.dofs();
        let inv_h = 1.0 / self.h;
        // Thomas algorithm; the matrix is symmetric with off-diagonal -a_i/h
        let mut diag = vec![0.0; n];
        let mut rhs = self.load.clone();
        for i in 0..n {
            let off_prev = -a[i] * inv_h;
            diag[i] = (a[i] + a[i + 1]) * inv_h;
            if i > 0 {
                let factor = off_prev / diag[i - 1];
                diag[i] -= factor * off_prev;
                rhs[i] -= factor * rhs[i - 1];
            }
            if diag[i].is_nan() || diag[i] <= 0.0 {
                return Err(Error::Singular {
                    row: i,
                    pivot: diag[i],
                });
            }
        }
        let mut u = vec![0.0; n];
        for i in (0..n).rev() {
            let upper = if i + 1 < n {
                -a[i + 1] * inv_h * u[i + 1]
            } else {
                0.0
            };
            u[i] = (rhs[i] - upper) / diag[i];
        }
        Ok(u)
    }

    /// Element gradients `(u_{e+1} - u_e) / h` with zero boundary values.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.dofs());
        let inv_h = 1.0 / self.h;
        (0..self.elements)
            .map(|e| {
                let left = if e == 0 { 0.0 } else { u[e - 1] };
                let right = if e + 1 == self.elements { 0.0 } else { u[e] };
                (right - left) * inv_h
            })
            .collect()
    }

    /// Element fluxes `a(·,y) u'`.
    pub fn flux(&self, y: &[f64], u: &[f64]) -> Vec<f64> {
        let a = self.coefficient_at(y);
        self.gradient(u)
            .iter()
            .zip(&a)
            .map(|(g, a)| g * a)
            .collect()
    }

    /// `L²(D)` norm of piecewise-constant element data.
    pub fn element_l2(&self, v: &[f64]) -> f64 {
        (self.h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    pub fn spatial_norm(&self, v: &[f64], which: SpatialNorm) -> Result<f64> {
        if v.len() != self.dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.dofs(),
                found: v.len(),
            });
        }
        Ok(match which {
            SpatialNorm::H1 => self.element_l2(&self.gradient(v)),
            SpatialNorm::L2 => {
                let mut s = 0.0;
                for e in 0..self.elements {
                    let l = if e == 0 { 0.0 } else { v[e - 1] };
                    let r = if e + 1 == self.elements { 0.0 } else { v[e] };
                    s += l * l + l * r + r * r;
                }
                (s * self.h / 3.0).max(0.0).sqrt()
            }
        })
    }

    /// Writes `x,u` rows including the boundary nodes.
    pub fn write_solution<W: Write>(&self, out: W, u: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "u"])?;
        let full = std::iter::once(0.0)
            .chain(u.iter().copied())
            .chain(std::iter::once(0.0));
        for (x, v) in self.nodes().into_iter().zip(full) {
            w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialNorm {
    /// `H¹_0` seminorm.
    H1,
    L2,
}

/// Insert-once cache of PDE solutions keyed by grid-point node indices.
#[derive(Debug, Default)]
pub struct SolveCache {
    map: RwLock<HashMap<MultiIndex, Arc<Vec<f64>>>>,
    solves: AtomicUsize,
}

impl SolveCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &MultiIndex) -> Option<Arc<Vec<f64>>> {
        self.map.read().unwrap().get(key).cloned()
    }

    pub fn contains(&self, key: &MultiIndex) -> bool {
        self.map.read().unwrap().contains_key(key)
    }

    /// Returns the cached solution or computes and stores it.
    pub fn get_or_solve(
        &self,
        key: &MultiIndex,
        solve: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<Arc<Vec<f64>>> {
        if let Some(v) = self.get(key) {
            return Ok(v);
        }
        let value = Arc::new(solve()?);
        let mut map = self.map.write().unwrap();
        let entry = map.entry(key.clone()).or_insert_with(|| {
            self.solves.fetch_add(1, Ordering::Relaxed);
            value
        });
        Ok(entry.clone())
    }

    /// Number of distinct solves stored.
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
