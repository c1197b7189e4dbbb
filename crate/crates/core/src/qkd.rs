//! Polarization-encoded key exchange between two robots.
//!
//! Alice sends single photons prepared with her half-wave plate in one of
//! four states. Bob rotates with his own plate (0° for the `+` basis, 22.5°
//! for `x`, which maps -45°/45° onto 0°/90°) and reads the polarizing beam
//! splitter: transmit is bit 0 (sensor 0), reflect is bit 1 (sensor 1).
//! Bases are then compared in public, mismatched slots discarded, and a
//! random sample of the survivors disclosed to estimate the error rate. An
//! intercept-resend eavesdropper pushes that rate to 1/4.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;

use crate::channel::{ChannelError, Message, Party, PublicChannel};
use crate::photonics::{hwp_rotate, pbs_route, OpticsError, Photon, PhotonId, PolarizationState, Port};
use crate::rng::RandomStream;

/// Wavelength used for key photons. Only relevant to filters and detectors.
pub const KEY_PHOTON_WAVELENGTH_NM: f64 = 810.0;

/// Bob's plate angle for the diagonal basis.
pub const CROSS_PLATE_DEG: f64 = 22.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Basis {
    /// Rectilinear: 0° and 90°.
    Plus,
    /// Diagonal: -45° and 45°.
    Cross,
}

impl Basis {
    pub fn random(rng: &mut RandomStream) -> Self {
        if rng.coin() {
            Basis::Cross
        } else {
            Basis::Plus
        }
    }

    /// Plate angle a receiver uses to map this basis onto the H/V axes.
    pub fn receiver_plate_deg(self) -> f64 {
        match self {
            Basis::Plus => 0.0,
            Basis::Cross => CROSS_PLATE_DEG,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Basis::Plus => "+",
            Basis::Cross => "x",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "u8", try_from = "u8"))]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn random(rng: &mut RandomStream) -> Self {
        Bit::from(rng.coin())
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.as_u8()
    }
}

impl TryFrom<u8> for Bit {
    type Error = QkdError;

    fn try_from(v: u8) -> Result<Self, QkdError> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            _ => Err(QkdError::InvalidBit),
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Alice's encoding.
pub fn alice_prepare(bit: Bit, basis: Basis) -> PolarizationState {
    match (bit, basis) {
        (Bit::Zero, Basis::Plus) => PolarizationState::HORIZONTAL,
        (Bit::One, Basis::Plus) => PolarizationState::VERTICAL,
        (Bit::Zero, Basis::Cross) => PolarizationState::ANTI_DIAGONAL,
        (Bit::One, Basis::Cross) => PolarizationState::DIAGONAL,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Table1Outcome {
    Deterministic(Bit),
    RandomDiscard,
}

/// One row of the Alice/Bob plate truth table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthTableRow {
    pub alice_state_deg: f64,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    /// Bob's plate setting as labelled on the bench (0° or 45°).
    pub bob_label_deg: f64,
    pub result: &'static str,
    pub beam_splitter: &'static str,
    pub outcome: Table1Outcome,
}

const fn row(
    alice_state_deg: f64,
    alice_basis: Basis,
    bob_basis: Basis,
    result: &'static str,
    beam_splitter: &'static str,
    outcome: Table1Outcome,
) -> TruthTableRow {
    TruthTableRow {
        alice_state_deg,
        alice_basis,
        bob_basis,
        bob_label_deg: match bob_basis {
            Basis::Plus => 0.0,
            Basis::Cross => 45.0,
        },
        result,
        beam_splitter,
        outcome,
    }
}

const RANDOM_HV: &str = "Random |0°⟩ and |90°⟩";
const HALF_HALF: &str = "50% reflects 50% passes light";

/// The eight plate combinations, in bench order.
pub const TRUTH_TABLE: [TruthTableRow; 8] = [
    row(0.0, Basis::Plus, Basis::Plus, "|0°⟩", "Passes the light", Table1Outcome::Deterministic(Bit::Zero)),
    row(90.0, Basis::Plus, Basis::Plus, "|90°⟩", "Reflects the light", Table1Outcome::Deterministic(Bit::One)),
    row(45.0, Basis::Cross, Basis::Plus, RANDOM_HV, HALF_HALF, Table1Outcome::RandomDiscard),
    row(-45.0, Basis::Cross, Basis::Plus, RANDOM_HV, HALF_HALF, Table1Outcome::RandomDiscard),
    row(0.0, Basis::Plus, Basis::Cross, RANDOM_HV, HALF_HALF, Table1Outcome::RandomDiscard),
    row(90.0, Basis::Plus, Basis::Cross, RANDOM_HV, HALF_HALF, Table1Outcome::RandomDiscard),
    row(45.0, Basis::Cross, Basis::Cross, "|90°⟩", "Reflects the light", Table1Outcome::Deterministic(Bit::One)),
    row(-45.0, Basis::Cross, Basis::Cross, "|0°⟩", "Passes the light", Table1Outcome::Deterministic(Bit::Zero)),
];

/// Outcome of Alice's state through Bob's plate and splitter, derived from
/// the optics: certain transmit or reflect gives a bit, anything else is a
/// coin flip that sifting discards.
pub fn table1_result(alice_state_deg: f64, bob_basis: Basis) -> Result<Table1Outcome, QkdError> {
    let state = PolarizationState::new(alice_state_deg);
    let on_grid = [-45.0, 0.0, 45.0, 90.0].contains(&alice_state_deg);
    if !on_grid {
        return Err(QkdError::InvalidState);
    }
    let rotated = hwp_rotate(state, bob_basis.receiver_plate_deg());
    let p_transmit = crate::photonics::malus_probability(rotated, 0.0);
    Ok(if p_transmit == 1.0 {
        Table1Outcome::Deterministic(Bit::Zero)
    } else if p_transmit == 0.0 {
        Table1Outcome::Deterministic(Bit::One)
    } else {
        Table1Outcome::RandomDiscard
    })
}

/// Bob's receiver: plate, beam splitter cube, two sensors. The photon is
/// trapped by whichever sensor fires.
pub fn bob_measure(
    photon: &mut Photon,
    bob_basis: Basis,
    rng: &mut RandomStream,
) -> Result<Bit, QkdError> {
    let state = photon.state().ok_or(QkdError::Optics(OpticsError::Unresolved))?;
    if photon.consumed {
        return Err(QkdError::ConsumedPhoton);
    }
    photon.polarization =
        crate::photonics::Polarization::Definite(hwp_rotate(state, bob_basis.receiver_plate_deg()));
    let port = pbs_route(photon, rng)?;
    photon.consumed = true;
    Ok(match port {
        Port::Transmit => Bit::Zero,
        Port::Reflect => Bit::One,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Interception {
    pub resent: Photon,
    pub eve_bit: Bit,
    pub eve_basis: Basis,
}

/// Eve measures in a random basis with Bob's apparatus and sends Bob a fresh
/// photon prepared in her own basis with the bit she read.
pub fn eve_intercept_resend(
    photon: &mut Photon,
    rng: &mut RandomStream,
) -> Result<Interception, QkdError> {
    let eve_basis = Basis::random(rng);
    let eve_bit = bob_measure(photon, eve_basis, rng)?;
    let resent = Photon::polarized(photon.id, photon.wavelength_nm, alice_prepare(eve_bit, eve_basis))
        .at_time(photon.emit_time_ns);
    Ok(Interception { resent, eve_bit, eve_basis })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AliceRecord {
    pub index: u64,
    pub bit: Bit,
    pub basis: Basis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BobRecord {
    pub index: u64,
    pub basis: Basis,
    /// `None` when no sensor fired (photon lost on the link).
    pub outcome: Option<Bit>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiftedKey {
    pub bits: Vec<Bit>,
    pub source_indices: Vec<u64>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Both sides' view after sifting; the indices agree by construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sifted {
    pub alice: SiftedKey,
    pub bob: SiftedKey,
}

impl Sifted {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }
}

/// Public basis comparison. Bob announces the basis of every slot in which a
/// sensor fired, Alice answers with hers, and slots with equal bases are kept.
/// Only bases cross the channel.
pub fn sift(
    alice: &[AliceRecord],
    bob: &[BobRecord],
    channel: &mut PublicChannel,
) -> Result<Sifted, QkdError> {
    if alice.len() != bob.len() {
        return Err(QkdError::TranscriptLengthMismatch);
    }
    let mut out = Sifted::default();
    for (a, b) in alice.iter().zip(bob) {
        if a.index != b.index {
            return Err(QkdError::TranscriptLengthMismatch);
        }
        let Some(bob_bit) = b.outcome else { continue };
        channel.send(Message::Basis { from: Party::Bob, index: b.index, basis: b.basis })?;
        channel.send(Message::Basis { from: Party::Alice, index: a.index, basis: a.basis })?;
        if a.basis == b.basis {
            out.alice.bits.push(a.bit);
            out.alice.source_indices.push(a.index);
            out.bob.bits.push(bob_bit);
            out.bob.source_indices.push(b.index);
        }
    }
    Ok(out)
}

/// How many sifted bits to sacrifice for error estimation.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SampleSize {
    /// `ceil(fraction * len)` bits, fraction in `(0, 1]`.
    Fraction(f64),
    /// Exactly this many bits, or all of them if the key is shorter.
    Count(usize),
}

impl SampleSize {
    fn resolve(self, len: usize) -> Result<usize, QkdError> {
        match self {
            SampleSize::Fraction(f) if f > 0.0 && f <= 1.0 => {
                Ok((libm::ceil(f * len as f64) as usize).clamp(1, len))
            }
            SampleSize::Fraction(_) => Err(QkdError::InvalidSampleSize),
            SampleSize::Count(0) => Err(QkdError::InvalidSampleSize),
            SampleSize::Count(c) => Ok(c.min(len)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QberEstimate {
    pub qber: f64,
    pub eve_detected: bool,
    pub compared: usize,
    pub mismatches: usize,
    /// Source indices that were disclosed, ascending.
    pub disclosed: Vec<u64>,
    /// The key with the disclosed positions removed.
    pub remaining: Sifted,
}

/// Disclose a random sample of sifted bits, count disagreements and drop the
/// sample from the key. Eve is flagged when the error rate exceeds
/// `threshold`.
pub fn estimate_qber(
    sifted: &Sifted,
    sample: SampleSize,
    threshold: f64,
    rng: &mut RandomStream,
    channel: &mut PublicChannel,
) -> Result<QberEstimate, QkdError> {
    let n = sifted.len();
    if n == 0 {
        return Err(QkdError::EmptyKey);
    }
    if sifted.bob.len() != n {
        return Err(QkdError::TranscriptLengthMismatch);
    }
    let k = sample.resolve(n)?;
    let mut chosen = index::sample(rng, n, k).into_vec();
    chosen.sort_unstable();

    let mut picked = alloc::vec![false; n];
    let mut mismatches = 0;
    let mut disclosed = Vec::with_capacity(k);
    for &pos in &chosen {
        picked[pos] = true;
        let index = sifted.alice.source_indices[pos];
        let (a, b) = (sifted.alice.bits[pos], sifted.bob.bits[pos]);
        channel.send(Message::Bit { from: Party::Alice, index, bit: a })?;
        channel.send(Message::Bit { from: Party::Bob, index, bit: b })?;
        if a != b {
            mismatches += 1;
        }
        disclosed.push(index);
    }

    let keep = |key: &SiftedKey| {
        let mut out = SiftedKey::default();
        for (pos, (&bit, &idx)) in key.bits.iter().zip(&key.source_indices).enumerate() {
            if !picked[pos] {
                out.bits.push(bit);
                out.source_indices.push(idx);
            }
        }
        out
    };
    let qber = mismatches as f64 / k as f64;
    Ok(QberEstimate {
        qber,
        eve_detected: qber > threshold,
        compared: k,
        mismatches,
        disclosed,
        remaining: Sifted { alice: keep(&sifted.alice), bob: keep(&sifted.bob) },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EveConfig {
    pub enabled: bool,
    /// Fraction of photons Eve intercepts when enabled.
    pub intercept_probability: f64,
}

impl Default for EveConfig {
    fn default() -> Self {
        Self { enabled: false, intercept_probability: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QkdConfig {
    pub photons: u64,
    pub eve: EveConfig,
    pub sample: SampleSize,
    pub qber_threshold: f64,
}

impl Default for QkdConfig {
    fn default() -> Self {
        Self {
            photons: 1000,
            eve: EveConfig::default(),
            sample: SampleSize::Fraction(0.1),
            qber_threshold: 0.05,
        }
    }
}

impl QkdConfig {
    pub fn validate(&self) -> Result<(), QkdError> {
        if !(0.0..=1.0).contains(&self.eve.intercept_probability) {
            return Err(QkdError::InvalidConfig("eve.intercept_probability"));
        }
        if !(0.0..=1.0).contains(&self.qber_threshold) {
            return Err(QkdError::InvalidConfig("qber_threshold"));
        }
        match self.sample {
            SampleSize::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(QkdError::InvalidConfig("compare_fraction"))
            }
            SampleSize::Count(0) => Err(QkdError::InvalidConfig("compare_count")),
            _ => Ok(()),
        }
    }
}

/// Per-photon transcript entry.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QkdRecord {
    pub index: u64,
    pub alice_bit: Bit,
    pub alice_basis: Basis,
    pub alice_state_deg: f64,
    pub bob_basis: Basis,
    pub bob_outcome: Option<Bit>,
    pub eve: Option<(Basis, Bit)>,
    /// Bases matched and Bob registered the photon.
    pub kept: bool,
    pub publicly_compared: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QkdSessionReport {
    pub photons_sent: u64,
    pub photons_detected: u64,
    pub intercepted: u64,
    pub sifted_length: usize,
    pub compared_count: usize,
    pub mismatches: usize,
    pub qber: f64,
    pub eve_detected: bool,
    pub abort: bool,
    pub final_key: SiftedKey,
    pub bob_final_key: SiftedKey,
    pub records: Vec<QkdRecord>,
}

/// Named random streams for one session.
#[derive(Clone, Debug)]
pub struct SessionStreams {
    pub alice: RandomStream,
    pub bob: RandomStream,
    pub eve: RandomStream,
    pub sampling: RandomStream,
}

impl SessionStreams {
    /// Streams `<prefix>/alice`, `<prefix>/bob`, `<prefix>/eve`,
    /// `<prefix>/sampling` under `seed`.
    pub fn new(seed: u64, prefix: &str) -> Self {
        let named = |n: &str| {
            let mut name = alloc::string::String::from(prefix);
            name.push('/');
            name.push_str(n);
            RandomStream::substream(seed, &name)
        };
        Self {
            alice: named("alice"),
            bob: named("bob"),
            eve: named("eve"),
            sampling: named("sampling"),
        }
    }
}

/// Alice's side of the exchange.
#[derive(Debug)]
pub struct AliceAgent<'a> {
    rng: &'a mut RandomStream,
    pub records: Vec<AliceRecord>,
}

impl<'a> AliceAgent<'a> {
    pub fn new(rng: &'a mut RandomStream) -> Self {
        Self { rng, records: Vec::new() }
    }

    pub fn emit(&mut self, index: u64) -> Photon {
        let bit = Bit::random(self.rng);
        let basis = Basis::random(self.rng);
        self.records.push(AliceRecord { index, bit, basis });
        Photon::polarized(PhotonId(index), KEY_PHOTON_WAVELENGTH_NM, alice_prepare(bit, basis))
            .at_time(index as i64)
    }
}

/// Bob's side of the exchange.
#[derive(Debug)]
pub struct BobAgent<'a> {
    rng: &'a mut RandomStream,
    pub records: Vec<BobRecord>,
}

impl<'a> BobAgent<'a> {
    pub fn new(rng: &'a mut RandomStream) -> Self {
        Self { rng, records: Vec::new() }
    }

    /// Bob chooses a basis for every slot, whether or not a photon arrives.
    pub fn receive(&mut self, index: u64, photon: Option<Photon>) -> Result<(), QkdError> {
        let basis = Basis::random(self.rng);
        let outcome = match photon {
            Some(mut p) => Some(bob_measure(&mut p, basis, self.rng)?),
            None => None,
        };
        self.records.push(BobRecord { index, basis, outcome });
        Ok(())
    }
}

/// The intercept-resend attacker.
#[derive(Debug)]
pub struct EveAgent<'a> {
    rng: &'a mut RandomStream,
    intercept_probability: f64,
}

impl<'a> EveAgent<'a> {
    pub fn new(rng: &'a mut RandomStream, intercept_probability: f64) -> Self {
        Self { rng, intercept_probability }
    }

    pub fn tap(&mut self, mut photon: Photon) -> Result<(Photon, Option<(Basis, Bit)>), QkdError> {
        if !self.rng.bernoulli(self.intercept_probability) {
            return Ok((photon, None));
        }
        let i = eve_intercept_resend(&mut photon, self.rng)?;
        Ok((i.resent, Some((i.eve_basis, i.eve_bit))))
    }
}

/// Run a full session over an always-available link.
pub fn run_session(
    config: &QkdConfig,
    streams: &mut SessionStreams,
    channel: &mut PublicChannel,
) -> Result<QkdSessionReport, QkdError> {
    run_session_with_link(config, streams, channel, |_| true)
}

/// Run a full session. `link(slot)` decides whether the photon of that slot
/// reaches the receiver; a lost photon fires neither sensor.
pub fn run_session_with_link(
    config: &QkdConfig,
    streams: &mut SessionStreams,
    channel: &mut PublicChannel,
    mut link: impl FnMut(u64) -> bool,
) -> Result<QkdSessionReport, QkdError> {
    config.validate()?;
    let SessionStreams { alice, bob, eve, sampling } = streams;
    let mut alice = AliceAgent::new(alice);
    let mut bob = BobAgent::new(bob);
    let mut eve = config
        .eve
        .enabled
        .then(|| EveAgent::new(eve, config.eve.intercept_probability));

    let mut eve_log = Vec::with_capacity(config.photons as usize);
    for slot in 0..config.photons {
        let photon = alice.emit(slot);
        let (photon, tapped) = match eve.as_mut() {
            Some(e) => e.tap(photon)?,
            None => (photon, None),
        };
        eve_log.push(tapped);
        let arriving = link(slot).then_some(photon);
        bob.receive(slot, arriving)?;
    }

    let sifted = sift(&alice.records, &bob.records, channel)?;
    let estimate = if sifted.is_empty() {
        None
    } else {
        Some(estimate_qber(&sifted, config.sample, config.qber_threshold, sampling, channel)?)
    };

    let disclosed: &[u64] = estimate.as_ref().map_or(&[], |e| &e.disclosed);
    let records: Vec<QkdRecord> = alice
        .records
        .iter()
        .zip(&bob.records)
        .zip(&eve_log)
        .map(|((a, b), e)| QkdRecord {
            index: a.index,
            alice_bit: a.bit,
            alice_basis: a.basis,
            alice_state_deg: alice_prepare(a.bit, a.basis).degrees(),
            bob_basis: b.basis,
            bob_outcome: b.outcome,
            eve: *e,
            kept: a.basis == b.basis && b.outcome.is_some(),
            publicly_compared: disclosed.binary_search(&a.index).is_ok(),
        })
        .collect();

    let photons_detected = bob.records.iter().filter(|r| r.outcome.is_some()).count() as u64;
    let intercepted = eve_log.iter().filter(|e| e.is_some()).count() as u64;
    Ok(match estimate {
        None => QkdSessionReport {
            photons_sent: config.photons,
            photons_detected,
            intercepted,
            sifted_length: 0,
            compared_count: 0,
            mismatches: 0,
            qber: 0.0,
            eve_detected: false,
            abort: true,
            final_key: SiftedKey::default(),
            bob_final_key: SiftedKey::default(),
            records,
        },
        Some(est) => QkdSessionReport {
            photons_sent: config.photons,
            photons_detected,
            intercepted,
            sifted_length: sifted.len(),
            compared_count: est.compared,
            mismatches: est.mismatches,
            qber: est.qber,
            eve_detected: est.eve_detected,
            abort: est.eve_detected || est.remaining.is_empty(),
            final_key: est.remaining.alice,
            bob_final_key: est.remaining.bob,
            records,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QkdError {
    InvalidState,
    InvalidBit,
    ConsumedPhoton,
    TranscriptLengthMismatch,
    EmptyKey,
    InvalidSampleSize,
    InvalidConfig(&'static str),
    Channel(ChannelError),
    Optics(OpticsError),
}

impl From<ChannelError> for QkdError {
    fn from(e: ChannelError) -> Self {
        QkdError::Channel(e)
    }
}

impl From<OpticsError> for QkdError {
    fn from(e: OpticsError) -> Self {
        match e {
            OpticsError::AlreadyAbsorbed => QkdError::ConsumedPhoton,
            other => QkdError::Optics(other),
        }
    }
}

impl fmt::Display for QkdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QkdError::InvalidState => f.write_str("state is not one of -45°, 0°, 45°, 90°"),
            QkdError::InvalidBit => f.write_str("bit must be 0 or 1"),
            QkdError::ConsumedPhoton => f.write_str("photon was already consumed"),
            QkdError::TranscriptLengthMismatch => f.write_str("Alice and Bob transcripts differ in length"),
            QkdError::EmptyKey => f.write_str("sifted key is empty"),
            QkdError::InvalidSampleSize => f.write_str("sample size must be a fraction in (0, 1] or a positive count"),
            QkdError::InvalidConfig(field) => write!(f, "invalid session parameter {field}"),
            QkdError::Channel(e) => write!(f, "{e}"),
            QkdError::Optics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for QkdError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn photon(state: PolarizationState) -> Photon {
        Photon::polarized(PhotonId(0), KEY_PHOTON_WAVELENGTH_NM, state)
    }

    #[test]
    fn prepare_examples() {
        assert_eq!(alice_prepare(Bit::Zero, Basis::Plus).degrees(), 0.0);
        assert_eq!(alice_prepare(Bit::One, Basis::Plus).degrees(), 90.0);
        assert_eq!(alice_prepare(Bit::One, Basis::Cross).degrees(), 45.0);
        assert_eq!(alice_prepare(Bit::Zero, Basis::Cross).degrees(), -45.0);
    }

    #[test]
    fn derived_table_matches_bench_table() {
        for row in TRUTH_TABLE {
            assert_eq!(
                table1_result(row.alice_state_deg, row.bob_basis),
                Ok(row.outcome),
                "{row:?}"
            );
            assert_eq!(alice_prepare_inverse(row.alice_state_deg).1, row.alice_basis);
        }
    }

    fn alice_prepare_inverse(deg: f64) -> (Bit, Basis) {
        for bit in [Bit::Zero, Bit::One] {
            for basis in [Basis::Plus, Basis::Cross] {
                if alice_prepare(bit, basis).degrees() == deg {
                    return (bit, basis);
                }
            }
        }
        panic!("not a BB84 state: {deg}");
    }

    #[test]
    fn table_rejects_off_grid() {
        assert_eq!(table1_result(30.0, Basis::Plus), Err(QkdError::InvalidState));
        assert_eq!(table1_result(135.0, Basis::Plus), Err(QkdError::InvalidState));
    }

    #[test]
    fn bob_deterministic_rows() {
        let mut rng = RandomStream::new(1);
        for _ in 0..500 {
            let mut p = photon(PolarizationState::HORIZONTAL);
            assert_eq!(bob_measure(&mut p, Basis::Plus, &mut rng), Ok(Bit::Zero));
            assert!(p.consumed);
            assert_eq!(bob_measure(&mut p, Basis::Plus, &mut rng), Err(QkdError::ConsumedPhoton));
            let mut p = photon(PolarizationState::DIAGONAL);
            assert_eq!(bob_measure(&mut p, Basis::Cross, &mut rng), Ok(Bit::One));
        }
    }

    #[test]
    fn bob_random_row() {
        let mut rng = RandomStream::new(2);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| {
                bob_measure(&mut photon(PolarizationState::VERTICAL), Basis::Cross, &mut rng)
                    == Ok(Bit::One)
            })
            .count();
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn eve_resends_in_her_basis() {
        let mut rng = RandomStream::new(3);
        let (mut plus, mut cross_pos, mut cross_neg) = (0, 0, 0);
        for _ in 0..20_000 {
            let mut p = photon(PolarizationState::HORIZONTAL);
            let i = eve_intercept_resend(&mut p, &mut rng).unwrap();
            assert!(p.consumed);
            let deg = i.resent.state().unwrap().degrees();
            match i.eve_basis {
                Basis::Plus => {
                    assert_eq!((deg, i.eve_bit), (0.0, Bit::Zero));
                    plus += 1;
                }
                Basis::Cross if deg == 45.0 => cross_pos += 1,
                Basis::Cross => {
                    assert_eq!(deg, -45.0);
                    cross_neg += 1;
                }
            }
        }
        let cross = (cross_pos + cross_neg) as f64;
        assert!((plus as f64 / 20_000.0 - 0.5).abs() < 0.02);
        assert!((cross_pos as f64 / cross - 0.5).abs() < 0.02);
    }

    fn records(bases: &[(Basis, Basis)]) -> (Vec<AliceRecord>, Vec<BobRecord>) {
        bases
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                (
                    AliceRecord { index: i as u64, bit: Bit::from(i % 3 == 0), basis: a },
                    BobRecord { index: i as u64, basis: b, outcome: Some(Bit::from(i % 3 == 0)) },
                )
            })
            .unzip()
    }

    #[test]
    fn sift_extremes() {
        let mut ch = PublicChannel::new();
        let (a, b) = records(&[(Basis::Plus, Basis::Plus), (Basis::Cross, Basis::Cross)]);
        assert_eq!(sift(&a, &b, &mut ch).unwrap().len(), 2);
        let (a, b) = records(&[(Basis::Plus, Basis::Cross), (Basis::Cross, Basis::Plus)]);
        assert!(sift(&a, &b, &mut ch).unwrap().is_empty());
        assert_eq!(sift(&a, &b[..1], &mut ch), Err(QkdError::TranscriptLengthMismatch));
    }

    #[test]
    fn sift_reveals_only_bases() {
        let mut ch = PublicChannel::new();
        let (a, mut b) = records(&[(Basis::Plus, Basis::Plus), (Basis::Cross, Basis::Plus)]);
        b.push(BobRecord { index: 2, basis: Basis::Plus, outcome: None });
        let mut a = a;
        a.push(AliceRecord { index: 2, bit: Bit::One, basis: Basis::Plus });
        let s = sift(&a, &b, &mut ch).unwrap();
        assert_eq!(s.alice.source_indices, vec![0]);
        assert!(ch.transcript().iter().all(|m| matches!(m, Message::Basis { .. })));
        // the lost slot 2 is never announced
        assert_eq!(ch.transcript().len(), 4);
    }

    #[test]
    fn qber_sampling_and_removal() {
        let mut rng = RandomStream::new(5);
        let mut ch = PublicChannel::new();
        let key = SiftedKey {
            bits: (0..100).map(|i| Bit::from(i % 2 == 0)).collect(),
            source_indices: (0..100).map(|i| 2 * i).collect(),
        };
        let sifted = Sifted { alice: key.clone(), bob: key };
        let est = estimate_qber(&sifted, SampleSize::Fraction(0.25), 0.05, &mut rng, &mut ch).unwrap();
        assert_eq!(est.compared, 25);
        assert_eq!(est.qber, 0.0);
        assert!(!est.eve_detected);
        assert_eq!(est.remaining.len(), 75);
        for idx in &est.disclosed {
            assert!(!est.remaining.alice.source_indices.contains(idx));
        }
        assert_eq!(ch.transcript().len(), 50);

        let empty = Sifted::default();
        assert_eq!(
            estimate_qber(&empty, SampleSize::Fraction(0.5), 0.05, &mut rng, &mut ch),
            Err(QkdError::EmptyKey)
        );
        assert_eq!(
            estimate_qber(&sifted, SampleSize::Fraction(0.0), 0.05, &mut rng, &mut ch),
            Err(QkdError::InvalidSampleSize)
        );
    }

    #[test]
    fn empty_session_aborts() {
        let cfg = QkdConfig { photons: 0, ..Default::default() };
        let mut streams = SessionStreams::new(1, "qkd");
        let r = run_session(&cfg, &mut streams, &mut PublicChannel::new()).unwrap();
        assert!(r.abort);
        assert_eq!(r.sifted_length, 0);
        assert!(r.final_key.is_empty());
    }

    #[test]
    fn honest_session() {
        let cfg = QkdConfig::default();
        let mut streams = SessionStreams::new(11, "qkd");
        let mut ch = PublicChannel::new();
        let r = run_session(&cfg, &mut streams, &mut ch).unwrap();
        assert_eq!(r.qber, 0.0);
        assert!(!r.eve_detected && !r.abort);
        // sigma = sqrt(1000/4) = 15.8
        assert!((r.sifted_length as i64 - 500).abs() < 80, "{}", r.sifted_length);
        assert_eq!(r.final_key, r.bob_final_key);
        assert_eq!(r.final_key.len() + r.compared_count, r.sifted_length);
        for rec in &r.records {
            assert_eq!(rec.kept, rec.alice_basis == rec.bob_basis);
            if rec.kept {
                assert_eq!(Some(rec.alice_bit), rec.bob_outcome);
            }
        }
    }

    #[test]
    fn eavesdropped_session_aborts() {
        let cfg = QkdConfig {
            eve: EveConfig { enabled: true, intercept_probability: 1.0 },
            ..Default::default()
        };
        let mut streams = SessionStreams::new(12, "qkd");
        let r = run_session(&cfg, &mut streams, &mut PublicChannel::new()).unwrap();
        assert!(r.compared_count >= 50);
        assert!(r.eve_detected && r.abort);
        assert!(r.mismatches > 0);
        assert_eq!(r.intercepted, 1000);
    }

    #[test]
    fn lost_slots_never_reach_the_key() {
        let cfg = QkdConfig::default();
        let mut streams = SessionStreams::new(13, "qkd");
        let r = run_session_with_link(&cfg, &mut streams, &mut PublicChannel::new(), |slot| {
            slot % 4 != 0
        })
        .unwrap();
        for rec in &r.records {
            if rec.index % 4 == 0 {
                assert_eq!(rec.bob_outcome, None);
                assert!(!rec.kept);
            }
        }
        assert!(r.final_key.source_indices.iter().all(|i| i % 4 != 0));
        assert_eq!(r.final_key, r.bob_final_key);
    }
}
