//! Simulation and stabilizability certification for nonlinear control systems
//! that mix first-order dynamics, Caputo fractional-derivative terms, and a
//! delayed nonlinear gain.
//!
//! The library is organized around a pipeline:
//!
//! * [`model`] describes a system (matrix part, feedback, fractional orders,
//!   delay kernel, nonlinearity) and closes the feedback loop;
//! * [`stability`] checks the closed loop against an eigenvalue condition and
//!   a gain-margin inequality, producing a [`stability::StabilityCertificate`];
//! * [`sim`] integrates trajectories and compares them against the
//!   certificate's decay envelope;
//! * [`specfun`], [`matrix`], [`expr`], and [`fracderiv`] supply the special
//!   functions, dense linear algebra, expression language, and discretized
//!   Caputo derivatives the pipeline is built on.

pub mod expr;
pub mod fracderiv;
pub mod matrix;
pub mod model;
pub mod sim;
pub mod specfun;
pub mod stability;
