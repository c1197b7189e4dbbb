//! Photon-level polarization optics.
//!
//! Linear polarization is an angle in degrees, modulo 180. A half-wave plate
//! rotates the polarization by twice the plate angle (the rotation model, not
//! the physical reflection about the fast axis). Polarizers and the
//! polarizing beam splitter follow Malus's law at the single-photon level:
//! the photon passes with probability `cos^2` of the angle to the axis and
//! then carries the axis polarization.

use core::fmt;

use crate::angle;
use crate::rng::RandomStream;

/// Linear polarization angle, stored in `[-45, 135)` degrees.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "f64", into = "f64"))]
pub struct PolarizationState(f64);

impl PolarizationState {
    pub const HORIZONTAL: Self = Self(0.0);
    pub const VERTICAL: Self = Self(90.0);
    pub const DIAGONAL: Self = Self(45.0);
    pub const ANTI_DIAGONAL: Self = Self(-45.0);

    pub fn new(angle_deg: f64) -> Self {
        Self(angle::wrap(angle_deg, -45.0, 180.0))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    /// The orthogonal polarization.
    pub fn orthogonal(self) -> Self {
        Self::new(self.0 + 90.0)
    }
}

impl From<f64> for PolarizationState {
    fn from(deg: f64) -> Self {
        Self::new(deg)
    }
}

impl From<PolarizationState> for f64 {
    fn from(p: PolarizationState) -> f64 {
        p.0
    }
}

impl fmt::Display for PolarizationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}°⟩", self.0)
    }
}

/// A complex probability amplitude in polar form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityAmplitude {
    magnitude: f64,
    phase_rad: f64,
}

impl ProbabilityAmplitude {
    pub fn new(magnitude: f64, phase_rad: f64) -> Result<Self, OpticsError> {
        if !(0.0..=1.0).contains(&magnitude) || !phase_rad.is_finite() {
            return Err(OpticsError::InvalidAmplitude);
        }
        Ok(Self { magnitude, phase_rad })
    }

    pub fn real(magnitude: f64) -> Result<Self, OpticsError> {
        Self::new(magnitude, 0.0)
    }

    pub fn magnitude(self) -> f64 {
        self.magnitude
    }

    pub fn phase(self) -> f64 {
        self.phase_rad
    }

    /// `|phi|^2`.
    pub fn probability(self) -> f64 {
        self.magnitude * self.magnitude
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhotonId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairId(pub u64);

/// Polarization carried by a photon. `Unresolved` only occurs for members of
/// an entangled pair that has not been measured yet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Polarization {
    Definite(PolarizationState),
    Unresolved,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Photon {
    pub id: PhotonId,
    pub emit_time_ns: i64,
    pub wavelength_nm: f64,
    pub polarization: Polarization,
    pub pair_id: Option<PairId>,
    pub consumed: bool,
}

impl Photon {
    /// A free photon with a definite polarization.
    pub fn polarized(id: PhotonId, wavelength_nm: f64, state: PolarizationState) -> Self {
        Self {
            id,
            emit_time_ns: 0,
            wavelength_nm,
            polarization: Polarization::Definite(state),
            pair_id: None,
            consumed: false,
        }
    }

    pub fn at_time(mut self, emit_time_ns: i64) -> Self {
        self.emit_time_ns = emit_time_ns;
        self
    }

    pub fn state(&self) -> Option<PolarizationState> {
        match self.polarization {
            Polarization::Definite(s) => Some(s),
            Polarization::Unresolved => None,
        }
    }

    fn definite(&self) -> Result<PolarizationState, OpticsError> {
        if self.consumed {
            return Err(OpticsError::AlreadyAbsorbed);
        }
        self.state().ok_or(OpticsError::Unresolved)
    }
}

/// Output port of a polarizing beam splitter (or any two-port analyzer).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Port {
    Transmit,
    Reflect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpticsError {
    /// The photon was trapped by an earlier absorbing element or detector.
    AlreadyAbsorbed,
    /// Magnitude outside `[0, 1]` or a composed probability above 1.
    InvalidAmplitude,
    /// The photon is half of an unmeasured entangled pair.
    Unresolved,
    /// `compose_probability` needs at least one amplitude.
    NoAmplitudes,
}

impl fmt::Display for OpticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpticsError::AlreadyAbsorbed => f.write_str("photon was already absorbed"),
            OpticsError::InvalidAmplitude => f.write_str("probability amplitude out of range"),
            OpticsError::Unresolved => f.write_str("photon polarization is unresolved"),
            OpticsError::NoAmplitudes => f.write_str("no amplitudes to compose"),
        }
    }
}

impl core::error::Error for OpticsError {}

/// Rotate the polarization by twice the plate angle.
pub fn hwp_rotate(pol: PolarizationState, plate_angle_deg: f64) -> PolarizationState {
    PolarizationState::new(pol.degrees() + 2.0 * plate_angle_deg)
}

/// Transmission probability through a polarizer with the given axis.
pub fn malus_probability(pol: PolarizationState, axis_deg: f64) -> f64 {
    angle::cos_sq_deg(pol.degrees() - axis_deg)
}

/// Send a photon through an absorbing polarizer. A transmitted photon leaves
/// polarized along the axis; an absorbed one is consumed.
pub fn polarizer_measure(
    photon: &mut Photon,
    axis_deg: f64,
    rng: &mut RandomStream,
) -> Result<bool, OpticsError> {
    let state = photon.definite()?;
    let transmitted = rng.bernoulli(malus_probability(state, axis_deg));
    if transmitted {
        photon.polarization = Polarization::Definite(PolarizationState::new(axis_deg));
    } else {
        photon.consumed = true;
    }
    Ok(transmitted)
}

/// Two-port analyzer at `axis_deg`: transmit collapses to the axis, reflect
/// to the orthogonal angle. Nothing is absorbed.
pub fn analyzer_route(
    photon: &mut Photon,
    axis_deg: f64,
    rng: &mut RandomStream,
) -> Result<Port, OpticsError> {
    let state = photon.definite()?;
    let axis = PolarizationState::new(axis_deg);
    let port = if rng.bernoulli(malus_probability(state, axis_deg)) {
        Port::Transmit
    } else {
        Port::Reflect
    };
    let collapsed = match port {
        Port::Transmit => axis,
        Port::Reflect => axis.orthogonal(),
    };
    photon.polarization = Polarization::Definite(collapsed);
    Ok(port)
}

/// Polarizing beam splitter: passes horizontal, reflects vertical.
pub fn pbs_route(photon: &mut Photon, rng: &mut RandomStream) -> Result<Port, OpticsError> {
    analyzer_route(photon, 0.0, rng)
}

/// Probability of an event reached through several alternatives.
///
/// Indistinguishable alternatives interfere (`|sum phi_i|^2`); distinguishable
/// ones add as probabilities (`sum |phi_i|^2`). One amplitude gives `|phi|^2`
/// either way.
pub fn compose_probability(
    amps: &[ProbabilityAmplitude],
    distinguishable: bool,
) -> Result<f64, OpticsError> {
    if amps.is_empty() {
        return Err(OpticsError::NoAmplitudes);
    }
    let p = if distinguishable {
        amps.iter().map(|a| a.probability()).sum::<f64>()
    } else {
        let (re, im) = amps.iter().fold((0.0, 0.0), |(re, im), a| {
            (
                re + a.magnitude * libm::cos(a.phase_rad),
                im + a.magnitude * libm::sin(a.phase_rad),
            )
        });
        re * re + im * im
    };
    if p > 1.0 + 1e-12 {
        return Err(OpticsError::InvalidAmplitude);
    }
    Ok(p.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn photon(deg: f64) -> Photon {
        Photon::polarized(PhotonId(0), 810.0, PolarizationState::new(deg))
    }

    #[test]
    fn hwp_examples() {
        assert_eq!(hwp_rotate(PolarizationState::new(0.0), 22.5).degrees(), 45.0);
        assert_eq!(hwp_rotate(PolarizationState::new(0.0), 45.0).degrees(), 90.0);
        assert_eq!(hwp_rotate(PolarizationState::new(33.3), 0.0).degrees(), 33.3);
        // 45 + 2*67.5 = 180 -> 0
        assert_eq!(hwp_rotate(PolarizationState::new(45.0), 67.5).degrees(), 0.0);
    }

    #[test]
    fn bb84_states_exact() {
        for deg in [-45.0, 0.0, 45.0, 90.0] {
            assert_eq!(PolarizationState::new(deg).degrees(), deg);
            assert_eq!(PolarizationState::new(deg + 180.0).degrees(), deg);
            assert_eq!(PolarizationState::new(deg - 540.0).degrees(), deg);
        }
        let mut s = PolarizationState::new(0.0);
        for _ in 0..1000 {
            s = hwp_rotate(s, 22.5);
        }
        // 1000 * 45 = 45000 = 250 * 180
        assert_eq!(s.degrees(), 0.0);
    }

    #[test]
    fn malus_examples() {
        assert_eq!(malus_probability(PolarizationState::new(0.0), 0.0), 1.0);
        assert_eq!(malus_probability(PolarizationState::new(90.0), 0.0), 0.0);
        assert_eq!(malus_probability(PolarizationState::new(45.0), 0.0), 0.5);
        let p = malus_probability(PolarizationState::new(30.0), 0.0);
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn polarizer_parallel_and_crossed() {
        let mut rng = RandomStream::new(3);
        let mut p = photon(0.0);
        assert_eq!(polarizer_measure(&mut p, 0.0, &mut rng), Ok(true));
        assert_eq!(p.state(), Some(PolarizationState::new(0.0)));

        let mut p = photon(90.0);
        assert_eq!(polarizer_measure(&mut p, 0.0, &mut rng), Ok(false));
        assert!(p.consumed);
        assert_eq!(
            polarizer_measure(&mut p, 0.0, &mut rng),
            Err(OpticsError::AlreadyAbsorbed)
        );
    }

    #[test]
    fn polarizer_collapses_to_axis() {
        let mut rng = RandomStream::new(9);
        for _ in 0..200 {
            let mut p = photon(10.0);
            if polarizer_measure(&mut p, 30.0, &mut rng).unwrap() {
                assert_eq!(p.state().unwrap().degrees(), 30.0);
                assert!(!p.consumed);
            } else {
                assert!(p.consumed);
            }
        }
    }

    #[test]
    fn polarizer_half_at_45() {
        let mut rng = RandomStream::new(11);
        let n = 100_000;
        let passed = (0..n)
            .filter(|_| polarizer_measure(&mut photon(45.0), 0.0, &mut rng).unwrap())
            .count();
        let frac = passed as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn pbs_deterministic_rows() {
        let mut rng = RandomStream::new(5);
        for _ in 0..1000 {
            let mut h = photon(0.0);
            assert_eq!(pbs_route(&mut h, &mut rng), Ok(Port::Transmit));
            let mut v = photon(90.0);
            assert_eq!(pbs_route(&mut v, &mut rng), Ok(Port::Reflect));
            assert_eq!(v.state().unwrap().degrees(), 90.0);
        }
    }

    #[test]
    fn pbs_half_at_45() {
        let mut rng = RandomStream::new(6);
        let n = 100_000;
        let mut transmit = 0;
        for _ in 0..n {
            let mut p = photon(45.0);
            match pbs_route(&mut p, &mut rng).unwrap() {
                Port::Transmit => {
                    transmit += 1;
                    assert_eq!(p.state().unwrap().degrees(), 0.0);
                }
                Port::Reflect => assert_eq!(p.state().unwrap().degrees(), 90.0),
            }
        }
        let frac = transmit as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn unresolved_photon_is_rejected() {
        let mut p = photon(0.0);
        p.polarization = Polarization::Unresolved;
        assert_eq!(
            pbs_route(&mut p, &mut RandomStream::new(0)),
            Err(OpticsError::Unresolved)
        );
    }

    #[test]
    fn compose_examples() {
        let half = ProbabilityAmplitude::real(0.5).unwrap();
        let half_pi = ProbabilityAmplitude::new(0.5, PI).unwrap();
        assert_eq!(compose_probability(&[half, half], false), Ok(1.0));
        let dark = compose_probability(&[half, half_pi], false).unwrap();
        assert!(dark.abs() < 1e-15, "{dark}");
        assert_eq!(compose_probability(&[half, half], true), Ok(0.5));
    }

    #[test]
    fn compose_matches_two_path_formula() {
        for k in 0..64 {
            let d1 = 0.3 * k as f64;
            let d2 = 1.7 - 0.11 * k as f64;
            let (m1, m2) = (0.4, 0.55);
            let a = ProbabilityAmplitude::new(m1, d1).unwrap();
            let b = ProbabilityAmplitude::new(m2, d2).unwrap();
            let expected = m1 * m1 + m2 * m2 + 2.0 * m1 * m2 * libm::cos(d2 - d1);
            let got = compose_probability(&[a, b], false).unwrap();
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_errors() {
        assert_eq!(compose_probability(&[], false), Err(OpticsError::NoAmplitudes));
        assert_eq!(ProbabilityAmplitude::real(1.2), Err(OpticsError::InvalidAmplitude));
        let one = ProbabilityAmplitude::real(1.0).unwrap();
        assert_eq!(
            compose_probability(&[one, one], false),
            Err(OpticsError::InvalidAmplitude)
        );
    }
}
