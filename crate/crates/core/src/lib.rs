//! Fermi pencil-beam forward models and off-axis inversion for narrow beams
//! in turbulent media.
//!
//! The crate evaluates fractional pencil-beam solutions in closed Fourier form,
//! synthesizes wide-angle single-scattering camera data, and inverts that data
//! for the beam axis, its transverse profile and the medium parameters
//! `(λ, s, ε^{2s}D, σF₀, z₀)`.

pub mod error;
pub mod fft;
pub mod forward_model;
pub mod geometry;
pub mod io;
pub mod par;
pub mod pencil_beam;
pub mod pipeline;
pub mod quad;
pub mod radon;
pub mod recovery;
pub mod scenario;
pub mod special;
pub mod stable;
pub mod validation;

pub use error::{Error, ErrorKind, Result};
