//! Exact numerics for the PXP chain in its Rydberg-blockade Hilbert space.
//!
//! The crate is organised bottom-up:
//!
//! - [`hilbert`]: enumeration of the cyclically constrained basis and product states.
//! - [`operators`]: sparse PXP Hamiltonian, perturbation terms and ladder splits `H = H⁺ + H⁻`.
//! - [`krylov`]: Lanczos with full reorthogonalisation and the forward-scattering recursion.
//! - [`analytic`]: closed-form coefficients and errors, q-numbers and su(2)_q fitting.
//! - [`dynamics`]: time evolution, return probability, spread complexity and friends.
//! - [`optimize`]: 1-D scans and Nelder–Mead tuning of perturbation strengths.

pub mod analytic;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod krylov;
pub mod operators;
pub mod optimize;

pub use error::{Error, Result};
pub use hilbert::{ConstrainedBasis, SpinConfiguration, StateTag, StateVector};
pub use krylov::{FsaData, KrylovData, TridiagonalHamiltonian};
pub use operators::{LadderPair, ModelConfig, Scheme, SparseHamiltonian, TermName};
