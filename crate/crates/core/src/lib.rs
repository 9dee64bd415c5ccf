//! Solitary waves of the 2D Schrödinger equation with exponential nonlinearity:
//! profile construction, linearized spectra, the unstable eigenvalue and
//! blow-up dynamics on radial grids.

pub mod banded;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod io;
pub mod linop;
pub mod model;
pub mod profile;
pub mod spectral;
pub mod stability;
pub mod verify;

pub use num_complex::Complex64;

pub use dynamics::{
    blowup_experiment, evolve, virial_check, BlowupRow, EvolutionState, EvolveConfig, Outcome,
    TrajectoryReport,
};
pub use error::{Error, Result};
pub use grid::{make_grid, Parity, RadialField, RadialGrid};
pub use linop::{SectorOperator, Which};
pub use model::{functionals, FunctionalReport, KSet, ModelParams};
pub use profile::{shoot_profile, ProfileSolution, SolverConfig};
pub use spectral::{krein_count, SpectralReport, Verdict};
pub use stability::{growing_mode, GrowingMode, StabilityReport};
