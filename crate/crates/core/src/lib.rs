//! Affine, tenable, balanced multi-color urns grown by drawing samples of
//! fixed size: model validation, replacement-matrix expansion, spectral
//! classification, exact and asymptotic moments, and Monte Carlo.

pub mod combinatorics;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod presets;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod spectral;
pub mod urn_model;

pub use nalgebra::{DMatrix, RowDVector};

pub use combinatorics::{enumerate_compositions, falling_factorial, multinomial, Composition};
pub use error::{Result, UrnError};
pub use moments::{AsymptoticSummary, MomentTrajectory};
pub use simulator::{MonteCarloSummary, Trajectory, UrnState};
pub use spectral::{decompose, EigenGroup, Regime, SpectralDecomposition};
pub use urn_model::{
    build_replacement_matrix, validate, CoreMatrix, ReplacementMatrix, SamplingMode, UrnSpec, ValidationReport,
};
