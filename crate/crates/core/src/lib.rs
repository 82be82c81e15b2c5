//! Decohered 2D cluster state on the Lieb lattice.
//!
//! The crate builds the cluster state as an explicit sum over domain-wall and
//! gauge configurations, applies local bit-flip and phase channels as
//! coefficient updates, and maps the resulting moments onto classical
//! Ising-type models. Three SPT diagnostics (Rényi relative entropy, strange
//! correlator, Rényi tripartite negativity) are available both exactly, from
//! the Pauli expansion, and through the classical models (exact enumeration or
//! Monte Carlo).
//!
//! Numerical code is generic over a [`Real`] scalar (`f32` or `f64`); the
//! aliases at the bottom of this file fix the common `f64` instantiations.

pub mod channels;
pub mod classical;
pub mod cluster;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod lattice;
pub mod mc;
pub mod pauli;
pub mod runner;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use channels::{ChannelSpec, ErrorKind, Support, SymmetryVerdict, Verdict};
pub use classical::{ExactResult, SpinModel, Term};
pub use cluster::{DomainWallConfig, GaugeConfig, PauliExpansion};
pub use lattice::{BoundaryKind, EdgePath, LiebLattice, Region, RegionPartition};
pub use pauli::{PauliOperator, PauliString, Phase};

pub type PauliExpansionF64 = cluster::PauliExpansion<f64>;
pub type PauliOperatorF64 = pauli::PauliOperator<f64>;
pub type DenseMatrixF64 = dense::DenseMatrix<f64>;
pub type SpinModelF64 = classical::SpinModel<f64>;
pub type SpinModelF32 = classical::SpinModel<f32>;
pub type McEstimateF64 = mc::McEstimate<f64>;
pub type DiagnosticsReportF64 = diagnostics::DiagnosticsReport<f64>;
