//! Dielectric response of a periodic crystal from its Bloch spectrum.
//!
//! The numerical core is generic over the real scalar type; `f64` aliases
//! are provided at the crate root.

pub mod bloch;
pub mod config;
pub mod crystal;
pub mod error;
pub mod kernels;
pub mod matrix_elements;
pub mod maxwell;
pub mod permittivity;
pub mod pipeline;
pub mod response;
pub mod scalar;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::{Cplx, Real};

pub type Lattice = crystal::LatticeSpec<f64>;
pub type Basis = crystal::PlaneWaveBasis<f64>;
pub type KGrid = crystal::KGrid<f64>;
pub type Crystal = crystal::CrystalModel<f64>;
pub type Spectrum = bloch::BlochSpectrum<f64>;
pub type Complex64 = Cplx<f64>;
