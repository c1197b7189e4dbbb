//! Down-converted photon pairs, filtering, single-photon detection and
//! coincidence counting.
//!
//! Pairs are polarization-anticorrelated: neither photon has a definite
//! polarization until one of them meets an analyzer, at which point the
//! outcome is 50/50 at any analyzer angle and the partner takes the
//! orthogonal polarization. After that the pair is an ordinary pair of
//! polarized photons.

use alloc::vec::Vec;
use core::fmt;

use crate::channel::{ChannelError, Message, Party, PublicChannel};
use crate::photonics::{
    analyzer_route, OpticsError, PairId, Photon, PhotonId, Polarization, PolarizationState, Port,
};
use crate::rng::RandomStream;

/// Center of the bandpass filters in front of the counters.
pub const FILTER_CENTER_NM: f64 = 810.0;
/// Full bandwidth of the bandpass filters.
pub const FILTER_BANDWIDTH_NM: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PumpSource {
    pub wavelength_nm: f64,
    pub power_mw: f64,
    /// Mean pair generation rate.
    pub pair_rate_hz: f64,
    /// Force a non-degenerate split; `None` yields two photons at twice the
    /// pump wavelength.
    pub signal_wavelength_nm: Option<f64>,
}

impl Default for PumpSource {
    fn default() -> Self {
        Self {
            wavelength_nm: 405.0,
            power_mw: 100.0,
            pair_rate_hz: 1.0e6,
            signal_wavelength_nm: None,
        }
    }
}

impl PumpSource {
    /// Signal and idler wavelengths satisfying `1/pump = 1/signal + 1/idler`.
    pub fn pair_wavelengths(&self) -> Result<(f64, f64), SpdcError> {
        if !(self.wavelength_nm > 0.0) {
            return Err(SpdcError::InvalidWavelength);
        }
        match self.signal_wavelength_nm {
            None => Ok((2.0 * self.wavelength_nm, 2.0 * self.wavelength_nm)),
            Some(signal) if signal > self.wavelength_nm && signal.is_finite() => {
                let idler = 1.0 / (1.0 / self.wavelength_nm - 1.0 / signal);
                Ok((signal, idler))
            }
            Some(_) => Err(SpdcError::InvalidWavelength),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Arm {
    Signal,
    Idler,
}

impl Arm {
    pub fn partner(self) -> Self {
        match self {
            Arm::Signal => Arm::Idler,
            Arm::Idler => Arm::Signal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntangledPair {
    pub pair_id: PairId,
    pub signal: Photon,
    pub idler: Photon,
    pub resolved: bool,
}

impl EntangledPair {
    pub fn photon(&self, arm: Arm) -> &Photon {
        match arm {
            Arm::Signal => &self.signal,
            Arm::Idler => &self.idler,
        }
    }

    pub fn photon_mut(&mut self, arm: Arm) -> &mut Photon {
        match arm {
            Arm::Signal => &mut self.signal,
            Arm::Idler => &mut self.idler,
        }
    }

    /// Analyze one photon of the pair at `analyzer_deg`.
    ///
    /// The first measurement is a fair coin regardless of the angle and
    /// fixes both polarizations. Later measurements follow ordinary Malus
    /// statistics and never touch the partner.
    pub fn measure(
        &mut self,
        which: Arm,
        analyzer_deg: f64,
        rng: &mut RandomStream,
    ) -> Result<Port, SpdcError> {
        if self.photon(which).consumed {
            return Err(SpdcError::ConsumedPhoton);
        }
        if self.resolved {
            return analyzer_route(self.photon_mut(which), analyzer_deg, rng).map_err(Into::into);
        }
        let axis = PolarizationState::new(analyzer_deg);
        let port = if rng.coin() { Port::Transmit } else { Port::Reflect };
        let measured = match port {
            Port::Transmit => axis,
            Port::Reflect => axis.orthogonal(),
        };
        self.photon_mut(which).polarization = Polarization::Definite(measured);
        self.photon_mut(which.partner()).polarization =
            Polarization::Definite(measured.orthogonal());
        self.resolved = true;
        Ok(port)
    }
}

/// Free-function form of [`EntangledPair::measure`].
pub fn measure_entangled(
    pair: &mut EntangledPair,
    which: Arm,
    analyzer_deg: f64,
    rng: &mut RandomStream,
) -> Result<Port, SpdcError> {
    pair.measure(which, analyzer_deg, rng)
}

/// Emits pairs and hands out unique pair and photon ids across calls.
#[derive(Clone, Debug)]
pub struct PairGenerator {
    pub source: PumpSource,
    next_pair: u64,
    clock_ns: f64,
}

impl PairGenerator {
    pub fn new(source: PumpSource) -> Self {
        Self { source, next_pair: 0, clock_ns: 0.0 }
    }

    /// Emit the pairs of the next `duration_ns` nanoseconds. Emission times
    /// form a Poisson process and are floored to whole nanoseconds.
    pub fn generate(
        &mut self,
        duration_ns: u64,
        rng: &mut RandomStream,
    ) -> Result<Vec<EntangledPair>, SpdcError> {
        let (signal_nm, idler_nm) = self.source.pair_wavelengths()?;
        if !(self.source.pair_rate_hz >= 0.0) {
            return Err(SpdcError::NegativeRate);
        }
        let start = self.clock_ns;
        let end = start + duration_ns as f64;
        self.clock_ns = end;
        let mut pairs = Vec::new();
        if self.source.pair_rate_hz == 0.0 || duration_ns == 0 {
            return Ok(pairs);
        }
        let rate_per_ns = self.source.pair_rate_hz * 1e-9;
        let mut t = start;
        loop {
            t += rng.exponential(rate_per_ns);
            if t >= end {
                break;
            }
            let k = self.next_pair;
            self.next_pair += 1;
            let emit = libm::floor(t) as i64;
            let make = |id: u64, wavelength_nm: f64| Photon {
                id: PhotonId(id),
                emit_time_ns: emit,
                wavelength_nm,
                polarization: Polarization::Unresolved,
                pair_id: Some(PairId(k)),
                consumed: false,
            };
            pairs.push(EntangledPair {
                pair_id: PairId(k),
                signal: make(2 * k, signal_nm),
                idler: make(2 * k + 1, idler_nm),
                resolved: false,
            });
        }
        Ok(pairs)
    }
}

/// Pairs emitted during `[0, duration_ns)` by a fresh generator.
pub fn generate_pairs(
    source: &PumpSource,
    duration_ns: u64,
    rng: &mut RandomStream,
) -> Result<Vec<EntangledPair>, SpdcError> {
    PairGenerator::new(*source).generate(duration_ns, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FilterResult {
    Pass,
    Block,
}

/// 810 nm bandpass, 30 nm wide.
pub fn bandpass_filter(photon: &Photon) -> FilterResult {
    if libm::fabs(photon.wavelength_nm - FILTER_CENTER_NM) <= FILTER_BANDWIDTH_NM / 2.0 {
        FilterResult::Pass
    } else {
        FilterResult::Block
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorId(pub u32);

/// Single-photon counter.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorSpec {
    pub id: DetectorId,
    pub wavelength_min_nm: f64,
    pub wavelength_max_nm: f64,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    /// Standard deviation of the Gaussian timing jitter.
    pub timing_jitter_ns: f64,
    /// Constant offset of this detector's clock from true time.
    pub clock_offset_ns: i64,
    pub propagation_delay_ns: i64,
    /// Recorded for completeness; not used by the model.
    pub active_size_um: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            id: DetectorId(0),
            wavelength_min_nm: 350.0,
            wavelength_max_nm: 900.0,
            efficiency: 0.35,
            dark_count_rate_hz: 0.0,
            timing_jitter_ns: 1.0,
            clock_offset_ns: 0,
            propagation_delay_ns: 0,
            active_size_um: 50.0,
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<(), SpdcError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(SpdcError::InvalidDetector("efficiency"));
        }
        if !(self.dark_count_rate_hz >= 0.0) {
            return Err(SpdcError::InvalidDetector("dark_count_rate_hz"));
        }
        if !(self.timing_jitter_ns >= 0.0) {
            return Err(SpdcError::InvalidDetector("timing_jitter_ns"));
        }
        if !(self.wavelength_min_nm <= self.wavelength_max_nm) {
            return Err(SpdcError::InvalidDetector("wavelength range"));
        }
        Ok(())
    }

    pub fn in_range(&self, wavelength_nm: f64) -> bool {
        (self.wavelength_min_nm..=self.wavelength_max_nm).contains(&wavelength_nm)
    }
}

/// A clock offset drawn uniformly from `[-max_abs_ns, max_abs_ns]`.
pub fn draw_clock_offset(max_abs_ns: i64, rng: &mut RandomStream) -> i64 {
    let m = max_abs_ns.abs();
    rng.uniform_int(-m, m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EventSource {
    TruePhoton { photon: PhotonId, pair: Option<PairId> },
    DarkCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionEvent {
    pub detector: DetectorId,
    /// Detector-local clock.
    pub timestamp_ns: i64,
    pub source: EventSource,
}

impl DetectionEvent {
    pub fn pair(&self) -> Option<PairId> {
        match self.source {
            EventSource::TruePhoton { pair, .. } => pair,
            EventSource::DarkCount => None,
        }
    }
}

/// Try to register a photon. In-band photons fire with probability equal to
/// the efficiency and are trapped when they do.
pub fn detect(
    photon: &mut Photon,
    spec: &DetectorSpec,
    rng: &mut RandomStream,
) -> Result<Option<DetectionEvent>, SpdcError> {
    if photon.consumed {
        return Err(SpdcError::ConsumedPhoton);
    }
    if !spec.in_range(photon.wavelength_nm) || !rng.bernoulli(spec.efficiency) {
        return Ok(None);
    }
    let jitter = libm::round(rng.gaussian(spec.timing_jitter_ns)) as i64;
    photon.consumed = true;
    Ok(Some(DetectionEvent {
        detector: spec.id,
        timestamp_ns: photon.emit_time_ns + spec.propagation_delay_ns + spec.clock_offset_ns + jitter,
        source: EventSource::TruePhoton { photon: photon.id, pair: photon.pair_id },
    }))
}

/// Dark counts over `[0, duration_ns)` of true time, stamped on the detector
/// clock.
pub fn generate_dark_counts(
    spec: &DetectorSpec,
    duration_ns: u64,
    rng: &mut RandomStream,
) -> Vec<DetectionEvent> {
    let mut events = Vec::new();
    if !(spec.dark_count_rate_hz > 0.0) {
        return events;
    }
    let rate_per_ns = spec.dark_count_rate_hz * 1e-9;
    let end = duration_ns as f64;
    let mut t = 0.0;
    loop {
        t += rng.exponential(rate_per_ns);
        if t >= end {
            break;
        }
        events.push(DetectionEvent {
            detector: spec.id,
            timestamp_ns: libm::floor(t) as i64 + spec.clock_offset_ns,
            source: EventSource::DarkCount,
        });
    }
    events
}

/// Stable sort by timestamp, the order the counter electronics produce.
pub fn sort_events(events: &mut [DetectionEvent]) {
    events.sort_by_key(|e| e.timestamp_ns);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoincidenceWindow {
    pub tau_ns: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Coincidence {
    pub a: DetectionEvent,
    pub b: DetectionEvent,
}

impl Coincidence {
    /// The pair both events came from, if they did.
    pub fn pair(&self) -> Option<PairId> {
        match (self.a.pair(), self.b.pair()) {
            (Some(x), Some(y)) if x == y => Some(x),
            _ => None,
        }
    }
}

/// Greedy earliest-first one-to-one matching of two sorted timestamp lists.
///
/// Each `a[i]`, in order, takes the earliest unmatched `b[j]` with
/// `|a[i] - b[j]| <= tau`. Returns index pairs in `a` order. Runs in linear
/// time: the matched `b` entries at or after the window's lower edge always
/// form one contiguous run, so a single cursor past that run suffices.
pub fn match_timestamps(
    a: &[i64],
    b: &[i64],
    tau_ns: i64,
) -> Result<Vec<(usize, usize)>, SpdcError> {
    if tau_ns < 0 {
        return Err(SpdcError::NegativeWindow);
    }
    if !is_sorted(a) || !is_sorted(b) {
        return Err(SpdcError::UnsortedInput);
    }
    let mut out = Vec::new();
    let mut next_free = 0usize;
    for (i, &ta) in a.iter().enumerate() {
        let lo = ta.saturating_sub(tau_ns);
        while next_free < b.len() && b[next_free] < lo {
            next_free += 1;
        }
        if next_free < b.len() && b[next_free] <= ta.saturating_add(tau_ns) {
            out.push((i, next_free));
            next_free += 1;
        }
    }
    Ok(out)
}

fn is_sorted(ts: &[i64]) -> bool {
    ts.windows(2).all(|w| w[0] <= w[1])
}

/// Coincidences between two detectors' sorted event lists.
pub fn find_coincidences(
    events_a: &[DetectionEvent],
    events_b: &[DetectionEvent],
    window: CoincidenceWindow,
) -> Result<Vec<Coincidence>, SpdcError> {
    let ta: Vec<i64> = events_a.iter().map(|e| e.timestamp_ns).collect();
    let tb: Vec<i64> = events_b.iter().map(|e| e.timestamp_ns).collect();
    Ok(match_timestamps(&ta, &tb, window.tau_ns)?
        .into_iter()
        .map(|(i, j)| Coincidence { a: events_a[i], b: events_b[j] })
        .collect())
}

/// Publish local arrival times on the classical channel. Only timing leaks;
/// outcomes stay local.
pub fn share_arrival_times(
    local_events: &[DetectionEvent],
    from: Party,
    channel: &mut PublicChannel,
) -> Result<Vec<i64>, SpdcError> {
    let timestamps_ns: Vec<i64> = local_events.iter().map(|e| e.timestamp_ns).collect();
    channel.send(Message::ArrivalTimes { from, timestamps_ns: timestamps_ns.clone() })?;
    Ok(timestamps_ns)
}

/// The most recent arrival-time list `from` published.
pub fn received_arrival_times(channel: &PublicChannel, from: Party) -> Option<&[i64]> {
    channel.transcript().iter().rev().find_map(|m| match m {
        Message::ArrivalTimes { from: f, timestamps_ns } if *f == from => Some(&timestamps_ns[..]),
        _ => None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdcError {
    ConsumedPhoton,
    UnsortedInput,
    NegativeWindow,
    NegativeRate,
    InvalidWavelength,
    InvalidDetector(&'static str),
    Channel(ChannelError),
    Optics(OpticsError),
}

impl From<ChannelError> for SpdcError {
    fn from(e: ChannelError) -> Self {
        SpdcError::Channel(e)
    }
}

impl From<OpticsError> for SpdcError {
    fn from(e: OpticsError) -> Self {
        match e {
            OpticsError::AlreadyAbsorbed => SpdcError::ConsumedPhoton,
            other => SpdcError::Optics(other),
        }
    }
}

impl fmt::Display for SpdcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpdcError::ConsumedPhoton => f.write_str("photon was already consumed"),
            SpdcError::UnsortedInput => f.write_str("event list is not sorted by timestamp"),
            SpdcError::NegativeWindow => f.write_str("coincidence window must be non-negative"),
            SpdcError::NegativeRate => f.write_str("pair rate must be non-negative"),
            SpdcError::InvalidWavelength => {
                f.write_str("signal wavelength must be longer than the pump wavelength")
            }
            SpdcError::InvalidDetector(field) => write!(f, "invalid detector {field}"),
            SpdcError::Channel(e) => write!(f, "{e}"),
            SpdcError::Optics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SpdcError {}
