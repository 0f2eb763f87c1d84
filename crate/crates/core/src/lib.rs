//! Adaptive sparse-grid stochastic collocation for affine parametric
//! diffusion problems.
//!
//! The crate provides downward-closed multi-index sets, nested univariate
//! node families, hierarchical sparse interpolation, a 1-D P1 finite element
//! model problem, residual-based and surplus-based error estimators, and the
//! adaptive drivers built on them.

pub mod adaptive;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod fem;
pub mod interp;
pub mod multiindex;
pub mod nodes;
pub mod quadrature;
pub mod selftest;
pub mod tensor;

pub use adaptive::{AdaptiveConfig, AdaptiveTrace, IterationRecord, Status, Strategy};
pub use error::{Error, Result};
pub use estimators::{EstimatorReport, NormSpec, ReferenceGrid};
pub use experiment::{ExperimentConfig, ProblemSpec, RunOptions, Summary};
pub use fem::{DiffusionProblem, Discretization, Ellipticity, Field, SolveCache, SpatialNorm};
pub use interp::{
    detail_apply_ct, grid_points, hierarchical_basis_eval, work, CtDetail, GridPoint,
    HierarchicalDetail, InterpolantSnapshot, ParametricField, SparseInterpolant,
};
pub use multiindex::{is_monotone, MonotoneIndexSet, MultiIndex};
pub use nodes::{NodeFamily, NodeKind};
