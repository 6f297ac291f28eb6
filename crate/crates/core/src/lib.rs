//! Spectral unmixing by nonnegative matrix factorization with a robust
//! l2,1 (or l2,p) representation loss and a per-pixel sparsity constraint
//! learned from the Gini index of the abundances.
//!
//! ```
//! use unmix_core::synth::{generate, SceneSpec};
//! use unmix_core::solver::{solve, SolverConfig};
//!
//! let mut spec = SceneSpec::new(8, 8, 16, 2);
//! spec.seed = 3;
//! let (cube, _truth) = generate(&spec).unwrap();
//! let result = solve(&cube, &SolverConfig::new(2)).unwrap();
//! assert_eq!(result.m.shape(), (16, 2));
//! assert_eq!(result.a.shape(), (2, 64));
//! ```

pub mod bench;
pub mod cube;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod solver;
pub mod sparsity;
pub mod synth;

pub use cube::SpectralCube;
pub use error::{Error, Result};
pub use linalg::{Matrix, RealVector};
