//! Simulation kernels for systems of independent Brownian particles.
//!
//! The same physical system can be described at several levels of fidelity:
//!
//! * [`particle`] — a discrete random walk of point particles, exact but
//!   expensive when the particle count is large;
//! * [`fv`] — a finite-volume Euler-Maruyama discretization of the
//!   Dean-Kawasaki equation in number-density form, accurate when cells hold
//!   enough particles for the white-noise flux approximation to hold;
//! * [`gaussian`] — the linearized Gaussian approximation, a deterministic
//!   mean field plus fluctuations whose noise amplitude depends on the mean
//!   field only;
//! * [`hybrid`] — an adaptive coupling that keeps the finite-volume
//!   description everywhere and switches to particles in low-density regions,
//!   synchronizing the two through per-face flux accounting.
//!
//! [`regrid`] decides where the particle region lives, [`stats`] provides the
//! per-cell moment and histogram machinery used to compare the methods, and
//! [`rng`] supplies the counter-based random streams that make every run
//! replayable: each draw is addressed by what it is for (a face, a particle,
//! a cell), never by the order in which it happens to be consumed.
//!
//! The crate is `no_std` (with `alloc`); IO, configuration, and the command
//! line live in the companion `dkh` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod field;
pub mod fv;
pub mod gaussian;
pub mod grid;
pub mod hybrid;
mod math;
pub mod particle;
pub mod region;
pub mod regrid;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use fv::{FaceNoise, NoiseSource, ZeroNoise};
pub use grid::{BoundaryCondition, Dir, GridSpec};
pub use hybrid::{FluxRegister, HybridState, StepLog};
pub use particle::{CrossingRecord, Particle, ParticleSet};
pub use region::{IndexBox, ParticleRegion};
pub use regrid::{RegridPolicy, TagMask};
pub use rng::{SimRng, Stream, StreamKind};
