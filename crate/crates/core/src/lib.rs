//! Numerical toolkit for L^p mean-distortion energies of finite-distortion
//! self-maps of the disk and annulus: evaluation, analytic gradients,
//! projected-gradient minimization with continuation in p, singular-integral
//! transforms and a Beltrami solver, Ahlfors–Hopf diagnostics, closed-form
//! radial extremals, and the p→1 / p→∞ limit diagnostics.

pub mod energy;
pub mod error;
pub mod fields;
pub mod grid;
pub mod hopf;
pub mod io;
pub mod limits;
pub mod optimizer;
pub mod radial;
pub mod singular;

pub use error::{Error, Result};
