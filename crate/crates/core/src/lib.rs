//! Martingale approximation toolkit for partial sums of stationary sequences
//! `X_i = f(xi_i)` driven by a finite, irreducible, stationary Markov chain.
//!
//! Every conditional expectation `E(. | F_0)` reduces to a power of the
//! transition operator, so the approximating martingales, the projective and
//! mixing criteria, and the spectral conditions are all evaluated exactly.
//! The [`montecarlo`] module complements the exact side with seeded,
//! reproducible simulation of maximal moments and functional CLT statistics.
//!
//! Modules:
//! - [`chain`]: chain validation, stationary law, operator, Poisson equation.
//! - [`martingale`]: averaged correctors, martingale difference kernels and
//!   exact trajectory decompositions.
//! - [`criteria`]: projective series, mixing coefficients and their series.
//! - [`spectral`]: spectral measures of reversible and normal chains.
//! - [`montecarlo`]: simulation, seminorm estimates, maximal inequalities,
//!   FCLT tests.

pub mod chain;
pub mod criteria;
pub mod error;
pub mod martingale;
pub mod montecarlo;
pub mod spectral;
pub mod stats;

pub use chain::{build_chain, FiniteMarkovChain, GeometricDecay, Observable, StateFunction};
pub use criteria::{CriterionReport, QuantileFunction, Verdict};
pub use error::{Error, Result};
pub use martingale::{AveragedCorrector, DecompositionTrace, DifferenceKernel};
pub use montecarlo::{InequalityReport, SeminormEstimate, TrajectoryBatch};
pub use spectral::{SpectralKind, SpectralMeasure, StructureFlags};
