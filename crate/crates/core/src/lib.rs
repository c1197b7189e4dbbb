//! Simulation primitives for quantum-secured cooperative robots.
//!
//! The crate models single photons at the level needed to run a
//! polarization-encoded key exchange between mobile robots:
//!
//! - [`photonics`]: half-wave plates, polarizers, the polarizing beam splitter
//!   and probability-amplitude composition.
//! - [`interferometer`]: a Mach-Zehnder interferometer with open or blocked arms.
//! - [`spdc`]: down-converted entangled pairs, bandpass filters, single-photon
//!   counters with dark counts, and coincidence matching.
//! - [`qkd`]: the prepare/measure/sift/estimate key exchange with an optional
//!   intercept-resend eavesdropper.
//! - [`robotnet`]: agents, optical link availability, key-bit commands and
//!   entanglement-triggered tasks.
//!
//! Every random outcome is drawn from a [`rng::RandomStream`], a named,
//! seed-derived substream, so runs are reproducible bit for bit.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, scenario
//! loading and the command line live in the `qcoop` companion crate.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod angle;
pub mod channel;
pub mod interferometer;
pub mod photonics;
pub mod qkd;
pub mod rng;
pub mod robotnet;
pub mod spdc;

pub use photonics::{Photon, PhotonId, Polarization, PolarizationState, Port, ProbabilityAmplitude};
pub use rng::RandomStream;
