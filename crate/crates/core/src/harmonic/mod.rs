//! Grid Laplace solvers, harmonic fields, and the LERW drift.

pub mod closed;
pub mod drift;
pub mod fields;
pub mod sparse;

pub use drift::{DerivativeBundle, DriftConfig, DriftContext, DriftSolution, DriftTracker};
pub use fields::{
    adjacency, discrete_harmonic_g, graph_harmonic, green_function, harmonic_measure, hitting_probability,
    node_of, poisson_kernel, rasterize_polyline, solve_dirichlet, solve_dirichlet_sw, FieldKind, HarmonicField,
    LaplaceSystem, Singular, Stencil, Vertex,
};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Target of the walk / Loewner chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Interior point `z_e`; the observable is the Green's function.
    Point { z: C64 },
    /// The point at infinity (sphere only).
    Infinity,
    /// Boundary arc traversed positively from `from` to `to`; the observable is harmonic measure.
    Arc { from: C64, to: C64 },
    /// Prime end at a flat boundary point `z` with inward unit normal; the observable is the
    /// normalized Poisson kernel.
    PrimeEnd { z: C64, normal: C64 },
}
