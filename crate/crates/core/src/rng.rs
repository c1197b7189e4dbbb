//! Seeded, named random substreams.
//!
//! A scenario carries one master seed. Each device or agent draws from its
//! own substream, identified by name, so adding a device never shifts the
//! draws seen by another one.

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp, Normal};

/// FNV-1a over the stream name. Stable across platforms and releases.
pub fn stream_id(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic random source for one named device.
///
/// `counter` counts word draws from the underlying generator and is what the
/// event log records to attribute randomness to a stream.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    counter: u64,
    inner: ChaCha20Rng,
}

impl RandomStream {
    /// The root stream for `seed`.
    pub fn new(seed: u64) -> Self {
        Self::with_stream_id(seed, 0)
    }

    /// The substream `name` of the master `seed`.
    pub fn substream(seed: u64, name: &str) -> Self {
        Self::with_stream_id(seed, stream_id(name))
    }

    fn with_stream_id(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, counter: 0, inner }
    }

    /// Derive a child substream, e.g. `"bob"` -> `"bob/link"`.
    pub fn child(&self, name: &str) -> Self {
        let id = self.stream ^ stream_id(name).rotate_left(17);
        Self::with_stream_id(self.seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of draws taken so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    /// `true` with probability `p`. `p` is clamped into `[0, 1]`; `p = 1`
    /// never fails and `p = 0` never succeeds.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        Bernoulli::new(p).expect("p in [0, 1]").sample(self)
    }

    /// A fair coin.
    pub fn coin(&mut self) -> bool {
        self.bernoulli(0.5)
    }

    /// Exponential variate with the given rate (per unit). Rate must be
    /// positive.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("positive rate").sample(self)
    }

    /// Zero-mean Gaussian with standard deviation `sigma`. Returns 0 without
    /// drawing when `sigma` is 0.
    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma).expect("finite sigma").sample(self)
    }

    /// Uniform integer in `[low, high]`.
    pub fn uniform_int(&mut self, low: i64, high: i64) -> i64 {
        self.random_range(low..=high)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.counter += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.counter += 1;
        self.inner.fill_bytes(dst)
    }
}
