//! On-off keying over the particle channel.
//!
//! Bit 1 releases `N_TX` particles at the start of a slot, bit 0 releases none.
//! The receiver counts particles at `t0 + iT` and decides 1 iff the count
//! reaches the threshold `ξ`. Counts are modelled as Poisson with the mean
//! given by the ISI sum over earlier slots.

use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::channel::ImpulseResponse;

/// Largest sequence length handled by exact enumeration.
pub const MAX_ENUMERATION_LENGTH: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommsError {
    #[error("invalid link parameter: {0}")]
    InvalidLink(String),
    #[error("impulse response has no evaluation at t = {0} s")]
    MissingTime(f64),
    #[error("sequence length {0} exceeds the enumeration limit {MAX_ENUMERATION_LENGTH}")]
    SequenceTooLong(usize),
    #[error("need {needed} channel taps, got {got}")]
    TooFewTaps { needed: usize, got: usize },
}

/// OOK link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OokLink {
    /// Symbol interval T [s].
    pub symbol_interval: f64,
    /// Sampling offset t0 within a slot [s].
    pub sample_offset: f64,
    /// Detection threshold ξ.
    pub threshold: u32,
    /// Particles released per 1-symbol.
    pub particles_per_pulse: usize,
    /// Symbols per frame K.
    pub sequence_length: usize,
}

impl Default for OokLink {
    fn default() -> Self {
        Self {
            symbol_interval: 2.0,
            sample_offset: 2.0,
            threshold: 1,
            particles_per_pulse: 1000,
            sequence_length: 10,
        }
    }
}

impl OokLink {
    pub fn validate(&self) -> Result<(), CommsError> {
        if !(self.symbol_interval.is_finite() && self.symbol_interval > 0.0) {
            return Err(CommsError::InvalidLink(format!("symbol interval {}", self.symbol_interval)));
        }
        if !(self.sample_offset.is_finite() && self.sample_offset > 0.0) {
            return Err(CommsError::InvalidLink(format!("sample offset {}", self.sample_offset)));
        }
        if self.threshold == 0 {
            return Err(CommsError::InvalidLink("threshold must be >= 1".into()));
        }
        if self.particles_per_pulse == 0 {
            return Err(CommsError::InvalidLink("particles per pulse must be >= 1".into()));
        }
        if self.sequence_length == 0 {
            return Err(CommsError::InvalidLink("sequence length must be >= 1".into()));
        }
        Ok(())
    }

    /// Lag times `t0 + kT`, `k = 0..K`, at which the impulse response is needed.
    pub fn tap_times(&self) -> Vec<f64> {
        (0..self.sequence_length)
            .map(|k| self.sample_offset + k as f64 * self.symbol_interval)
            .collect()
    }
}

/// Mean counts per slot for one bit sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedStatistics {
    pub mean_counts_per_slot: Vec<f64>,
    pub channel_taps: Vec<f64>,
}

/// `tap[k] = N̄_ob(t0 + kT)` read from `ir` at exactly those times.
pub fn channel_taps(link: &OokLink, ir: &ImpulseResponse) -> Result<Vec<f64>, CommsError> {
    link.validate()?;
    link.tap_times()
        .into_iter()
        .map(|t| ir.at(t).ok_or(CommsError::MissingTime(t)))
        .collect()
}

/// ISI sum `n̄[i] = Σ_{j ≤ i} b[j] tap[i − j]`.
pub fn received_statistics(bits: &[bool], taps: &[f64]) -> Result<ReceivedStatistics, CommsError> {
    if taps.len() < bits.len() {
        return Err(CommsError::TooFewTaps { needed: bits.len(), got: taps.len() });
    }
    let mean = (0..bits.len())
        .map(|i| (0..=i).filter(|&j| bits[j]).map(|j| taps[i - j]).sum())
        .collect();
    Ok(ReceivedStatistics { mean_counts_per_slot: mean, channel_taps: taps[..bits.len()].to_vec() })
}

/// Threshold detector.
pub fn detect(count: u64, threshold: u32) -> bool {
    count >= threshold as u64
}

/// `Pr(N ≤ k)` for `N ~ Poisson(mean)`.
pub fn poisson_cdf(k: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 1.0;
    }
    gamma_ur(k as f64 + 1.0, mean)
}

/// Error probability of slot `i` given its mean count and sent bit.
fn slot_error(mean: f64, bit: bool, threshold: u32) -> f64 {
    let miss = poisson_cdf(threshold as u64 - 1, mean);
    if bit {
        miss
    } else {
        1.0 - miss
    }
}

/// Average SER over all `2^K` equiprobable sequences and all `K` slots.
///
/// The error at slot `i` depends only on `b[0..=i]`, so each prefix is visited once.
pub fn ser_exact(link: &OokLink, taps: &[f64]) -> Result<f64, CommsError> {
    link.validate()?;
    let k = link.sequence_length;
    if k > MAX_ENUMERATION_LENGTH {
        return Err(CommsError::SequenceTooLong(k));
    }
    if taps.len() < k {
        return Err(CommsError::TooFewTaps { needed: k, got: taps.len() });
    }
    let mut bits = Vec::with_capacity(k);
    let total = prefix_errors(&mut bits, taps, k, link.threshold);
    Ok(total / k as f64)
}

/// Sum over slots `i ≥ len(prefix)` of the expected error, averaged over the remaining bits.
fn prefix_errors(prefix: &mut Vec<bool>, taps: &[f64], k: usize, threshold: u32) -> f64 {
    let i = prefix.len();
    if i == k {
        return 0.0;
    }
    let isi: f64 = (0..i).filter(|&j| prefix[j]).map(|j| taps[i - j]).sum();
    let mut acc = 0.0;
    for bit in [false, true] {
        let mean = isi + if bit { taps[0] } else { 0.0 };
        prefix.push(bit);
        acc += 0.5 * (slot_error(mean, bit, threshold) + prefix_errors(prefix, taps, k, threshold));
        prefix.pop();
    }
    acc
}

/// SER without ISI and `ξ = 1`: `½ exp(−N̄)`.
pub fn ser_no_isi(mean_count: f64) -> f64 {
    0.5 * (-mean_count).exp()
}

/// One simulated frame: sent bits and per-slot observed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub bits: Vec<bool>,
    pub counts: Vec<u64>,
}

/// Empirical SER with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerEstimate {
    pub ser: f64,
    pub std_error: f64,
    pub symbols: u64,
    pub errors: u64,
}

impl SerEstimate {
    pub fn from_counts(errors: u64, symbols: u64) -> Self {
        let n = symbols.max(1) as f64;
        let p = errors as f64 / n;
        Self { ser: p, std_error: (p * (1.0 - p) / n).sqrt(), symbols, errors }
    }

    /// Binomial standard error under a hypothesised true rate `p`.
    pub fn std_error_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.symbols.max(1) as f64).sqrt()
    }
}

/// Detect every slot of every frame and count symbol errors.
pub fn ser_simulated(frames: &[Frame], threshold: u32) -> SerEstimate {
    let mut errors = 0u64;
    let mut symbols = 0u64;
    for f in frames {
        for (&b, &c) in f.bits.iter().zip(&f.counts) {
            symbols += 1;
            if detect(c, threshold) != b {
                errors += 1;
            }
        }
    }
    SerEstimate::from_counts(errors, symbols)
}
