//! Provably safe first-order policy optimisation.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece of the
//! toolkit: zonotope algebra ([`zonoset`]), small dense convex solvers ([`optkit`]), the
//! differentiable safety layers ([`safeguard`]), differentiable control environments
//! ([`envsim`]), a reverse-mode tape with policy/critic networks ([`gradnet`]) and the
//! short-horizon actor-critic trainer ([`shac`]). File formats, configuration and the
//! command line live in the `safeshield` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod envsim;
pub mod error;
pub mod gradnet;
pub mod linalg;
pub mod optkit;
pub mod safeguard;
pub mod shac;
pub mod stats;
pub mod zonoset;

pub use error::{Error, Result};
pub use zonoset::{AxisBox, ContainmentCertificate, Zonotope};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
