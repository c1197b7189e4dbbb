//! Mach-Zehnder interferometer.
//!
//! Input port A, first splitter, arms 1 and 2, second splitter, detectors B
//! and C. Arm 1 is reached by reflection at the first splitter and leads to B
//! by transmission at the second; arm 2 is the transmit-then-reflect path.
//! Both paths to B carry amplitude `r * t`, so with open arms
//! `P(B) = 2 r^2 t^2 (1 + cos delta)`, which is `(1 + cos delta) / 2` for
//! balanced splitters. Blocking arm 2 makes the path known and leaves only the
//! arm-1 contributions.

use core::f64::consts::{FRAC_1_SQRT_2, PI};
use core::fmt;

use crate::photonics::{compose_probability, ProbabilityAmplitude};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MachZehnderConfig {
    pub arm1_length: f64,
    pub arm2_length: f64,
    pub wavelength: f64,
    pub arm2_blocked: bool,
    /// Reflection amplitude of each splitter; `1/sqrt(2)` for a 50/50 cube.
    pub splitter_amplitude: f64,
}

impl Default for MachZehnderConfig {
    fn default() -> Self {
        Self {
            arm1_length: 1.0,
            arm2_length: 1.0,
            wavelength: 1.0,
            arm2_blocked: false,
            splitter_amplitude: FRAC_1_SQRT_2,
        }
    }
}

impl MachZehnderConfig {
    pub fn validate(&self) -> Result<(), InterferometerError> {
        if !(self.wavelength > 0.0) {
            return Err(InterferometerError::NonPositiveWavelength);
        }
        if !(self.arm1_length > 0.0 && self.arm2_length > 0.0) {
            return Err(InterferometerError::NonPositiveLength);
        }
        let r2 = self.splitter_amplitude * self.splitter_amplitude;
        if !(r2 > 0.0 && r2 < 1.0) {
            return Err(InterferometerError::InvalidSplitter);
        }
        Ok(())
    }

    /// Phase difference `delta = delta_2 - delta_1` between the arms.
    pub fn phase_difference(&self) -> Result<f64, InterferometerError> {
        Ok(arm_phase(self.arm2_length, self.wavelength)?
            - arm_phase(self.arm1_length, self.wavelength)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutcomeDistribution {
    pub p_detector_b: f64,
    pub p_detector_c: f64,
    pub p_absorbed: f64,
}

impl OutcomeDistribution {
    pub fn total(&self) -> f64 {
        self.p_detector_b + self.p_detector_c + self.p_absorbed
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutcomeCounts {
    pub detector_b: u64,
    pub detector_c: u64,
    pub absorbed: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.detector_b + self.detector_c + self.absorbed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterferometerError {
    NonPositiveWavelength,
    NonPositiveLength,
    InvalidSplitter,
}

impl fmt::Display for InterferometerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositiveWavelength => f.write_str("wavelength must be positive"),
            Self::NonPositiveLength => f.write_str("arm lengths must be positive"),
            Self::InvalidSplitter => f.write_str("splitter amplitude squared must lie in (0, 1)"),
        }
    }
}

impl core::error::Error for InterferometerError {}

/// Phase accumulated over `length`: `2 pi length / wavelength`.
pub fn arm_phase(length: f64, wavelength: f64) -> Result<f64, InterferometerError> {
    if !(wavelength > 0.0) {
        return Err(InterferometerError::NonPositiveWavelength);
    }
    Ok(2.0 * PI * length / wavelength)
}

/// Outcome distribution for a given phase difference.
pub fn distribution_for_phase(
    delta: f64,
    arm2_blocked: bool,
    splitter_amplitude: f64,
) -> Result<OutcomeDistribution, InterferometerError> {
    let r = splitter_amplitude;
    let r2 = r * r;
    if !(r2 > 0.0 && r2 < 1.0) {
        return Err(InterferometerError::InvalidSplitter);
    }
    let t = libm::sqrt(1.0 - r2);
    let amp = |m: f64, phase: f64| {
        ProbabilityAmplitude::new(m, phase).map_err(|_| InterferometerError::InvalidSplitter)
    };

    if arm2_blocked {
        // Only arm 1 survives; which-path is known.
        let to_b = amp(r * t, 0.0)?;
        let to_c = amp(r * r, 0.0)?;
        let p_b = compose_probability(&[to_b], true).expect("single amplitude");
        let p_c = compose_probability(&[to_c], true).expect("single amplitude");
        return Ok(OutcomeDistribution {
            p_detector_b: p_b,
            p_detector_c: p_c,
            p_absorbed: 1.0 - r2,
        });
    }

    let p_b = if r2 == 0.5 {
        0.5 * (1.0 + libm::cos(delta))
    } else {
        2.0 * r2 * (1.0 - r2) * (1.0 + libm::cos(delta))
    };
    let p_b = p_b.clamp(0.0, 1.0);
    Ok(OutcomeDistribution {
        p_detector_b: p_b,
        p_detector_c: 1.0 - p_b,
        p_absorbed: 0.0,
    })
}

/// Analytic outcome distribution for a configuration.
pub fn detection_probability(
    config: &MachZehnderConfig,
) -> Result<OutcomeDistribution, InterferometerError> {
    config.validate()?;
    distribution_for_phase(
        config.phase_difference()?,
        config.arm2_blocked,
        config.splitter_amplitude,
    )
}

/// Sample `n_photons` outcomes from a distribution.
pub fn sample_outcomes(
    dist: &OutcomeDistribution,
    n_photons: u64,
    rng: &mut RandomStream,
) -> OutcomeCounts {
    let mut counts = OutcomeCounts::default();
    let p_c_given_not_b = if dist.p_detector_b < 1.0 {
        dist.p_detector_c / (1.0 - dist.p_detector_b)
    } else {
        0.0
    };
    for _ in 0..n_photons {
        if rng.bernoulli(dist.p_detector_b) {
            counts.detector_b += 1;
        } else if rng.bernoulli(p_c_given_not_b) {
            counts.detector_c += 1;
        } else {
            counts.absorbed += 1;
        }
    }
    counts
}

/// Send `n_photons` single photons through the interferometer.
pub fn simulate_stream(
    config: &MachZehnderConfig,
    n_photons: u64,
    rng: &mut RandomStream,
) -> Result<OutcomeCounts, InterferometerError> {
    let dist = detection_probability(config)?;
    Ok(sample_outcomes(&dist, n_photons, rng))
}
