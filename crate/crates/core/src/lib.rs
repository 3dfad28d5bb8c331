//! Numerical laboratory for a high-frequency partial-data Schrödinger inverse
//! problem on box domains: finite-difference forward solvers, partial
//! Dirichlet-to-Neumann and impedance trace maps, complex-geometric-optics
//! solutions through a periodic FFT solver, quantitative Runge approximation by
//! SVD truncation, and Fourier low-pass reconstruction of the potential, plus
//! the experiment driver that probes every scaling law behind them.

pub mod boundary;
pub mod bvp;
pub mod cgo;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod reconstruct;
pub mod runge;
pub mod spectral;
pub mod torus;

pub use error::{LabError, Result};
pub use grid::{BoundaryPatch, BoxDomain, FacePart, Grid, RegionPartition, Side, SubBox, C64};
pub use spectral::{
    amplification, b_mu, sobolev_norm, AmplificationFactors, PotentialClass, PotentialField,
    SchrodingerOp, SpectralData,
};
