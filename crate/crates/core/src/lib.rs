//! Desk-scale numerics for Fourier multipliers on the torus: Wiener
//! averages of lattice symbols, recovery of atomic parts, Riesz-product
//! lower-bound certificates, Decell's pseudoinverse with the projection
//! obstruction for `A(D)`-free subspaces, and the torus-to-Euclidean
//! transference of lattice averages.

pub mod error;
pub mod lattice;
pub mod measures;
pub mod projection;
pub mod riesz;
pub mod transference;
pub mod wiener;

pub use error::{Error, Result};
pub use lattice::{ball_average, enumerate_ball, schedule, GrowthFunction, LatticeBall, Normalization, SchedulePoint};
pub use measures::{Atom, AtomicMeasure, SymbolSpec};
pub use num_complex::Complex64;
pub use projection::{CMatrix, MatrixSymbol, ObstructionReport, ObstructionVerdict, PseudoinverseReport};
pub use riesz::{BlowupCertificate, GreedySigma, RieszProductSpec, SpectrumPolynomial};
pub use transference::{BumpSpec, ExtendedSymbol, TransferenceReport};
pub use wiener::{LimitChoice, Verdict, WienerEstimate};
