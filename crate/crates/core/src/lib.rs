//! Magnetic-nanoparticle molecular communication in a rectangular microfluidic duct.
//!
//! The crate is organised bottom-up:
//!
//! - [`physics`] maps magnet, fluid and particle composition to transport
//!   coefficients (diffusion, magnetic drift, friction).
//! - [`spectral`] solves the Robin-boundary eigenproblem behind the bounded
//!   drift–diffusion Green's function.
//! - [`channel`] assembles axis densities, observation probabilities and the
//!   (optionally size-averaged) impulse response.
//! - [`comms`] covers on-off keying, threshold detection and symbol error rates.
//! - [`simulator`] is an independent particle-based Brownian-dynamics ground truth.
//! - [`config`] and [`cli`] provide the experiment runner and its CSV artifacts.

pub mod channel;
pub mod cli;
pub mod comms;
pub mod config;
pub mod physics;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod spectral;
