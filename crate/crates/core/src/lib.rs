//! Stable 3-forms in six real dimensions.
//!
//! The crate covers the pointwise algebra of stable forms ([`hitchin`]), the
//! SU(2) structure they induce on a hypersurface ([`boundary`]), grid-sampled
//! form fields with an exact discrete exterior derivative ([`fields`]), a
//! least-squares search for torsion-free structures in a fixed class
//! ([`solver`]) and the Fourier-mode analysis of the boundary complex on
//! `S² × T³` ([`spheremodes`]).

pub mod exterior;
pub mod hitchin;
pub mod model;
pub mod boundary;
pub mod fields;
pub mod analytic;
pub mod solver;
pub mod spheremodes;
