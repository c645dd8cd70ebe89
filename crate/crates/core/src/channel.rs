//! Observation probability and impulse response of the duct channel.
//!
//! A particle released at `(−d, y0, z0)` is carried by the flow along `x` and
//! observed while inside the receiver box `[−c_x/2, c_x/2] × [−c_y/2, c_y/2] × [0, c_z]`.
//! The three axes separate: `x` is a free drifting Gaussian, `z` a bounded
//! drift–diffusion with partially adsorbing walls, and `y` the same without drift.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use statrs::function::erf::{erf, erfc};
use thiserror::Error;

use crate::physics::RadiusDistribution;
use crate::rng;
use crate::spectral::{BoundaryParams, EigenSystem, SpectralError};

/// Series evaluation below `EARLY_TIME_FACTOR · L²/D` requires opt-in.
pub const EARLY_TIME_FACTOR: f64 = 1e-6;

/// Size draws are reduced in fixed chunks so results do not depend on thread count.
const DRAW_CHUNK: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid transport parameter {field} = {value}")]
    InvalidTransport { field: &'static str, value: f64 },
    #[error("time {time} s is below the series convergence limit {limit} s; opt in to early times")]
    EarlyTime { time: f64, limit: f64 },
    #[error("time must be positive and finite, got {0}")]
    InvalidTime(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid size distribution: {0}")]
    SizeDistribution(String),
}

/// Duct, transmitter and receiver geometry plus flow and wall properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    /// Channel height h [m].
    pub height: f64,
    /// Channel width w [m].
    pub width: f64,
    /// Transmitter-receiver distance d [m].
    pub tx_distance: f64,
    /// Release height z0 ∈ [0, h] [m].
    pub tx_height: f64,
    /// Lateral release position y0 ∈ [−w/2, w/2] [m].
    pub tx_lateral: f64,
    /// Receiver length c_x [m].
    pub rx_length: f64,
    /// Receiver width c_y ≤ w [m].
    pub rx_width: f64,
    /// Receiver height c_z ≤ h [m].
    pub rx_height: f64,
    /// Flow velocity v_f [m/s].
    pub flow_velocity: f64,
    /// Wall adsorption coefficient a_c [m/s].
    pub adsorption: f64,
}

impl Default for ChannelGeometry {
    /// 10 µm × 10 µm duct, 1 mm link, 100 µm × 1 µm × 1 µm receiver on the floor.
    fn default() -> Self {
        Self {
            height: 10e-6,
            width: 10e-6,
            tx_distance: 1e-3,
            tx_height: 10e-6,
            tx_lateral: 0.0,
            rx_length: 0.1e-3,
            rx_width: 1e-6,
            rx_height: 1e-6,
            flow_velocity: 0.5e-3,
            adsorption: 0.1e-6,
        }
    }
}

impl ChannelGeometry {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("height", self.height),
            ("width", self.width),
            ("rx_length", self.rx_length),
            ("rx_width", self.rx_width),
            ("rx_height", self.rx_height),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ChannelError::InvalidGeometry(format!("{name} must be > 0, got {v}")));
            }
        }
        let nonneg = [
            ("tx_distance", self.tx_distance),
            ("flow_velocity", self.flow_velocity),
            ("adsorption", self.adsorption),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ChannelError::InvalidGeometry(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=self.height).contains(&self.tx_height) {
            return Err(ChannelError::InvalidGeometry(format!(
                "tx_height {} outside [0, {}]",
                self.tx_height, self.height
            )));
        }
        if !(self.tx_lateral.abs() <= 0.5 * self.width) {
            return Err(ChannelError::InvalidGeometry(format!(
                "tx_lateral {} outside [-w/2, w/2]",
                self.tx_lateral
            )));
        }
        if self.rx_height > self.height {
            return Err(ChannelError::InvalidGeometry("rx_height exceeds height".into()));
        }
        if self.rx_width > self.width {
            return Err(ChannelError::InvalidGeometry("rx_width exceeds width".into()));
        }
        Ok(())
    }

    /// Nominal arrival time `d / v_f`.
    pub fn arrival_time(&self) -> f64 {
        self.tx_distance / self.flow_velocity
    }
}

fn check_transport(diffusion: f64, drift: f64) -> Result<(), ChannelError> {
    if !(diffusion.is_finite() && diffusion > 0.0) {
        return Err(ChannelError::InvalidTransport { field: "diffusion", value: diffusion });
    }
    if !(drift.is_finite() && drift >= 0.0) {
        return Err(ChannelError::InvalidTransport { field: "drift", value: drift });
    }
    Ok(())
}

fn check_time(t: f64) -> Result<(), ChannelError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(ChannelError::InvalidTime(t))
    }
}

/// Density of `x` at time `t` for a release at `−d` [1/m].
pub fn axial_pdf(x: f64, t: f64, geometry: &ChannelGeometry, diffusion: f64) -> f64 {
    let mean = geometry.flow_velocity * t - geometry.tx_distance;
    let var2 = 4.0 * diffusion * t;
    (-(x - mean).powi(2) / var2).exp() / (std::f64::consts::PI * var2).sqrt()
}

/// `erf(hi) − erf(lo)` without cancellation in the tails.
fn erf_difference(hi: f64, lo: f64) -> f64 {
    if lo > 0.0 {
        erfc(lo) - erfc(hi)
    } else if hi < 0.0 {
        erfc(-hi) - erfc(-lo)
    } else {
        erf(hi) - erf(lo)
    }
}

/// Probability that `x ∈ [−c_x/2, c_x/2]` at time `t`.
pub fn axial_observation(t: f64, geometry: &ChannelGeometry, diffusion: f64) -> f64 {
    let mean = geometry.flow_velocity * t - geometry.tx_distance;
    let scale = (4.0 * diffusion * t).sqrt();
    let half = 0.5 * geometry.rx_length;
    (0.5 * erf_difference((mean + half) / scale, (mean - half) / scale)).clamp(0.0, 1.0)
}

/// Temporal factor `exp(u z0 − D(u² + s_n²) t)` combined in one exponent.
fn vertical_weight(system: &EigenSystem, n: usize, t: f64, diffusion: f64) -> f64 {
    let u = system.params().drift;
    let s2 = system.spectrum().modes()[n].eigenvalue_squared();
    (u * system.source() - diffusion * (u * u + s2) * t).exp()
}

/// Vertical density `p_z(z; t)` from the series held in `system`.
pub fn vertical_pdf(z: f64, t: f64, system: &EigenSystem, diffusion: f64) -> Result<f64, ChannelError> {
    check_time(t)?;
    let p = system.params();
    if !(0.0..=p.length).contains(&z) {
        return Err(SpectralError::OutOfDomain { position: z, length: p.length }.into());
    }
    let u = p.drift;
    let mut sum = 0.0;
    for n in 0..=system.terms() {
        let s2 = system.spectrum().modes()[n].eigenvalue_squared();
        let w = (-u * (z - system.source()) - diffusion * (u * u + s2) * t).exp();
        sum += system.coefficients()[n] * w * system.mode_value(n, z);
    }
    Ok(sum)
}

/// Probability that `z ∈ [0, c_z]` at time `t`.
pub fn vertical_observation(
    t: f64,
    system: &EigenSystem,
    diffusion: f64,
    rx_height: f64,
) -> Result<f64, ChannelError> {
    check_time(t)?;
    Ok(vertical_series(t, system, diffusion, rx_height, system.terms()).clamp(0.0, 1.0))
}

fn vertical_series(t: f64, system: &EigenSystem, diffusion: f64, rx_height: f64, terms: usize) -> f64 {
    let u = system.params().drift;
    (0..=terms)
        .map(|n| {
            system.coefficients()[n]
                * vertical_weight(system, n, t, diffusion)
                * system.mode_weighted_integral(n, 0.0, rx_height, u)
        })
        .sum()
}

/// Lateral eigen-system: the pure diffusion problem on `[0, w]` with the source shifted by `w/2`.
pub fn lateral_system(
    width: f64,
    adsorption_ratio: f64,
    terms: usize,
    tx_lateral: f64,
) -> Result<EigenSystem, ChannelError> {
    let params = BoundaryParams::new(0.0, adsorption_ratio, width)?;
    Ok(EigenSystem::new(params, terms, tx_lateral + 0.5 * width)?)
}

/// Lateral density `p_y(y; t)` for `y ∈ [−w/2, w/2]`.
pub fn lateral_pdf(y: f64, t: f64, system: &EigenSystem, diffusion: f64) -> Result<f64, ChannelError> {
    check_time(t)?;
    let width = system.params().length;
    let shifted = y + 0.5 * width;
    if !(0.0..=width).contains(&shifted) {
        return Err(SpectralError::OutOfDomain { position: y, length: width }.into());
    }
    let mut sum = 0.0;
    for n in 0..=system.terms() {
        let s2 = system.spectrum().modes()[n].eigenvalue_squared();
        sum += system.coefficients()[n] * (-diffusion * s2 * t).exp() * system.mode_value(n, shifted);
    }
    Ok(sum)
}

/// Probability that `y ∈ [−c_y/2, c_y/2]` at time `t`.
pub fn lateral_observation(
    t: f64,
    system: &EigenSystem,
    diffusion: f64,
    rx_width: f64,
) -> Result<f64, ChannelError> {
    check_time(t)?;
    Ok(lateral_series(t, system, diffusion, rx_width, system.terms()).clamp(0.0, 1.0))
}

fn lateral_series(t: f64, system: &EigenSystem, diffusion: f64, rx_width: f64, terms: usize) -> f64 {
    let width = system.params().length;
    let (a, b) = (0.5 * (width - rx_width), 0.5 * (width + rx_width));
    (0..=terms)
        .map(|n| {
            let s2 = system.spectrum().modes()[n].eigenvalue_squared();
            system.coefficients()[n] * (-diffusion * s2 * t).exp() * system.mode_weighted_integral(n, a, b, 0.0)
        })
        .sum()
}

/// Per-axis observation probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisProbabilities {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AxisProbabilities {
    pub fn product(&self) -> f64 {
        self.x * self.y * self.z
    }
}

/// Magnitudes of the last retained series terms, as a convergence indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTail {
    pub vertical: f64,
    pub lateral: f64,
}

/// Series model of one particle class: geometry, transport and both eigen-systems.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    geometry: ChannelGeometry,
    diffusion: f64,
    drift: f64,
    vertical: Arc<EigenSystem>,
    lateral: Arc<EigenSystem>,
    allow_early: bool,
}

impl ChannelModel {
    /// Build the model for diffusion `D` and magnetic drift `v_m` with `terms` higher modes.
    pub fn new(geometry: ChannelGeometry, diffusion: f64, drift: f64, terms: usize) -> Result<Self, ChannelError> {
        Self::build(geometry, diffusion, drift, terms, None)
    }

    /// As [`ChannelModel::new`], reusing eigen-systems from `cache`.
    pub fn with_cache(
        geometry: ChannelGeometry,
        diffusion: f64,
        drift: f64,
        terms: usize,
        cache: &EigenCache,
    ) -> Result<Self, ChannelError> {
        Self::build(geometry, diffusion, drift, terms, Some(cache))
    }

    fn build(
        geometry: ChannelGeometry,
        diffusion: f64,
        drift: f64,
        terms: usize,
        cache: Option<&EigenCache>,
    ) -> Result<Self, ChannelError> {
        geometry.validate()?;
        check_transport(diffusion, drift)?;
        let kappa = geometry.adsorption / diffusion;
        let vp = BoundaryParams::new(drift / (2.0 * diffusion), kappa, geometry.height)?;
        let lp = BoundaryParams::new(0.0, kappa, geometry.width)?;
        let y_source = geometry.tx_lateral + 0.5 * geometry.width;
        let (vertical, lateral) = match cache {
            Some(c) => (c.get(vp, terms, geometry.tx_height)?, c.get(lp, terms, y_source)?),
            None => (
                Arc::new(EigenSystem::new(vp, terms, geometry.tx_height)?),
                Arc::new(EigenSystem::new(lp, terms, y_source)?),
            ),
        };
        Ok(Self { geometry, diffusion, drift, vertical, lateral, allow_early: false })
    }

    /// Permit evaluation below the early-time convergence limit.
    pub fn allow_early_times(mut self, allow: bool) -> Self {
        self.allow_early = allow;
        self
    }

    pub fn geometry(&self) -> &ChannelGeometry {
        &self.geometry
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn vertical_system(&self) -> &EigenSystem {
        &self.vertical
    }

    pub fn lateral_system(&self) -> &EigenSystem {
        &self.lateral
    }

    /// Smallest time at which the series is evaluated without opt-in.
    pub fn early_time_limit(&self) -> f64 {
        let l = self.geometry.height.max(self.geometry.width);
        EARLY_TIME_FACTOR * l * l / self.diffusion
    }

    fn guard(&self, t: f64) -> Result<(), ChannelError> {
        check_time(t)?;
        let limit = self.early_time_limit();
        if !self.allow_early && t < limit {
            return Err(ChannelError::EarlyTime { time: t, limit });
        }
        Ok(())
    }

    /// Per-axis probabilities from the full series.
    pub fn axis_probabilities(&self, t: f64) -> Result<AxisProbabilities, ChannelError> {
        self.guard(t)?;
        Ok(self.axes_truncated(t, self.vertical.terms().min(self.lateral.terms())))
    }

    fn axes_truncated(&self, t: f64, terms: usize) -> AxisProbabilities {
        let g = &self.geometry;
        AxisProbabilities {
            x: axial_observation(t, g, self.diffusion),
            y: lateral_series(t, &self.lateral, self.diffusion, g.rx_width, terms).clamp(0.0, 1.0),
            z: vertical_series(t, &self.vertical, self.diffusion, g.rx_height, terms).clamp(0.0, 1.0),
        }
    }

    /// Observation probability `P_x P_y P_z` at time `t`.
    pub fn observation(&self, t: f64) -> Result<f64, ChannelError> {
        Ok(self.axis_probabilities(t)?.product())
    }

    /// Quasi-steady single-mode approximation.
    pub fn asymptotic_observation(&self, t: f64) -> Result<f64, ChannelError> {
        check_time(t)?;
        Ok(self.axes_truncated(t, 0).product())
    }

    /// Last retained term of each series at time `t`.
    pub fn tail(&self, t: f64) -> Result<SeriesTail, ChannelError> {
        check_time(t)?;
        let g = &self.geometry;
        let nz = self.vertical.terms();
        let ny = self.lateral.terms();
        let u = self.vertical.params().drift;
        let vz = self.vertical.coefficients()[nz]
            * vertical_weight(&self.vertical, nz, t, self.diffusion)
            * self.vertical.mode_weighted_integral(nz, 0.0, g.rx_height, u);
        let w = g.width;
        let s2 = self.lateral.spectrum().modes()[ny].eigenvalue_squared();
        let vy = self.lateral.coefficients()[ny]
            * (-self.diffusion * s2 * t).exp()
            * self
                .lateral
                .mode_weighted_integral(ny, 0.5 * (w - g.rx_width), 0.5 * (w + g.rx_width), 0.0);
        Ok(SeriesTail { vertical: vz.abs(), lateral: vy.abs() })
    }
}

/// Vertical probability for fully reflecting walls (`κ = 0`): steady term plus `terms` modes.
pub fn reflecting_vertical(t: f64, geometry: &ChannelGeometry, diffusion: f64, drift: f64, terms: usize) -> f64 {
    let u = drift / (2.0 * diffusion);
    let (h, c, z0) = (geometry.height, geometry.rx_height, geometry.tx_height);
    let steady = if u == 0.0 { c / h } else { (-2.0 * c * u).exp_m1() / (-2.0 * u * h).exp_m1() };
    let mut sum = steady;
    for n in 1..=terms {
        let s = n as f64 * std::f64::consts::PI / h;
        let (sz, cz) = (s * z0).sin_cos();
        let a = 2.0 / h * (cz - u / s * sz) / (1.0 + u * u / (s * s));
        sum += a * (u * (z0 - c) - diffusion * (u * u + s * s) * t).exp() * (c * s).sin() / s;
    }
    sum
}

/// Lateral probability for fully reflecting side walls.
pub fn reflecting_lateral(t: f64, geometry: &ChannelGeometry, diffusion: f64, terms: usize) -> f64 {
    let (w, c, y0) = (geometry.width, geometry.rx_width, geometry.tx_lateral);
    let mut sum = c / w;
    for n in 1..=terms {
        let s = n as f64 * std::f64::consts::PI / w;
        let b = 2.0 / w * (s * (y0 + 0.5 * w)).cos();
        sum += b * (-diffusion * s * s * t).exp() * 2.0 / s * (0.5 * s * w).cos() * (0.5 * s * c).sin();
    }
    sum
}

/// Observation probability for fully reflecting walls, ignoring `geometry.adsorption`.
pub fn reflecting_observation(t: f64, geometry: &ChannelGeometry, diffusion: f64, drift: f64, terms: usize) -> f64 {
    axial_observation(t, geometry, diffusion)
        * reflecting_lateral(t, geometry, diffusion, terms).clamp(0.0, 1.0)
        * reflecting_vertical(t, geometry, diffusion, drift, terms).clamp(0.0, 1.0)
}

/// Axis probability for a fully adsorbing interval `[0, L]` (sine modes), released at `source`,
/// observed over `[a, b]` with drift parameter `u`.
fn adsorbing_axis(t: f64, length: f64, source: f64, a: f64, b: f64, u: f64, diffusion: f64, terms: usize) -> f64 {
    let mut sum = 0.0;
    for n in 0..=terms {
        let s = (n + 1) as f64 * std::f64::consts::PI / length;
        let anti = |z: f64| {
            let (sz, cz) = (s * z).sin_cos();
            -(-u * z).exp() * (u * sz + s * cz) / (u * u + s * s)
        };
        let integral = anti(b) - anti(a);
        sum += 2.0 / length * (s * source).sin() * (u * source - diffusion * (u * u + s * s) * t).exp() * integral;
    }
    sum
}

/// Vertical probability for fully adsorbing walls (`κ → ∞`).
pub fn adsorbing_vertical(t: f64, geometry: &ChannelGeometry, diffusion: f64, drift: f64, terms: usize) -> f64 {
    let u = drift / (2.0 * diffusion);
    adsorbing_axis(t, geometry.height, geometry.tx_height, 0.0, geometry.rx_height, u, diffusion, terms)
}

/// Lateral probability for fully adsorbing side walls.
pub fn adsorbing_lateral(t: f64, geometry: &ChannelGeometry, diffusion: f64, terms: usize) -> f64 {
    let w = geometry.width;
    let (a, b) = (0.5 * (w - geometry.rx_width), 0.5 * (w + geometry.rx_width));
    adsorbing_axis(t, w, geometry.tx_lateral + 0.5 * w, a, b, 0.0, diffusion, terms)
}

/// Observation probability for fully adsorbing walls, ignoring `geometry.adsorption`.
pub fn adsorbing_observation(t: f64, geometry: &ChannelGeometry, diffusion: f64, drift: f64, terms: usize) -> f64 {
    axial_observation(t, geometry, diffusion)
        * adsorbing_lateral(t, geometry, diffusion, terms).clamp(0.0, 1.0)
        * adsorbing_vertical(t, geometry, diffusion, drift, terms).clamp(0.0, 1.0)
}

type CacheKey = (u64, u64, u64, usize, u64);

/// Bounded cache of eigen-systems keyed by quantized boundary parameters and source.
#[derive(Debug)]
pub struct EigenCache {
    capacity: usize,
    map: Mutex<HashMap<CacheKey, Arc<EigenSystem>>>,
}

/// Drop the low mantissa bits so values within ~1e-12 relative share a key.
fn quantize(x: f64) -> u64 {
    x.to_bits() & !((1u64 << 12) - 1)
}

impl EigenCache {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), map: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.map.lock().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, params: BoundaryParams, terms: usize, source: f64) -> Result<Arc<EigenSystem>, ChannelError> {
        let key = (
            quantize(params.drift),
            quantize(params.adsorption),
            quantize(params.length),
            terms,
            quantize(source),
        );
        if let Some(hit) = self.map.lock().ok().and_then(|m| m.get(&key).cloned()) {
            return Ok(hit);
        }
        let system = Arc::new(EigenSystem::new(params, terms, source)?);
        if let Ok(mut m) = self.map.lock() {
            if m.len() >= self.capacity {
                m.clear();
            }
            m.insert(key, Arc::clone(&system));
        }
        Ok(system)
    }
}

impl Default for EigenCache {
    fn default() -> Self {
        Self::new(1 << 16)
    }
}

/// Transport of a particle of nominal (mean) size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalTransport {
    /// D_0 [m²/s].
    pub diffusion: f64,
    /// v_m0 [m/s].
    pub drift: f64,
}

/// How particle-size dispersion enters the impulse response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeMode {
    /// All particles at the mean radius.
    Nominal,
    /// Monte Carlo average over `draws` log-normal radii.
    SizeAveraged { draws: usize, seed: u64 },
}

/// Options for [`impulse_response`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseOptions {
    pub terms: usize,
    pub mode: SizeMode,
    pub allow_early_times: bool,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self { terms: crate::spectral::DEFAULT_TERMS, mode: SizeMode::Nominal, allow_early_times: false }
    }
}

/// Mean number of observed particles at each requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub times: Vec<f64>,
    pub mean_counts: Vec<f64>,
    pub n_tx: f64,
}

impl ImpulseResponse {
    /// Mean count at exactly time `t`, if it was evaluated.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.times.iter().position(|&x| x == t).map(|i| self.mean_counts[i])
    }

    /// Observation probability at each time.
    pub fn probabilities(&self) -> Vec<f64> {
        self.mean_counts.iter().map(|c| c / self.n_tx).collect()
    }
}

/// Mean observed count `n_tx · E{P_ob(t)}` at each of `times`.
pub fn impulse_response(
    geometry: &ChannelGeometry,
    transport: NominalTransport,
    sizes: &RadiusDistribution,
    n_tx: f64,
    times: &[f64],
    options: ResponseOptions,
    cache: Option<&EigenCache>,
) -> Result<ImpulseResponse, ChannelError> {
    check_transport(transport.diffusion, transport.drift)?;
    let eval = |d: f64, v: f64| -> Result<Vec<f64>, ChannelError> {
        let model = match cache {
            Some(c) => ChannelModel::with_cache(*geometry, d, v, options.terms, c)?,
            None => ChannelModel::new(*geometry, d, v, options.terms)?,
        }
        .allow_early_times(options.allow_early_times);
        times.iter().map(|&t| model.observation(t)).collect()
    };
    let probabilities = match options.mode {
        SizeMode::SizeAveraged { draws, seed } if draws > 0 && !sizes.is_degenerate() => {
            let mean = sizes.mean();
            let chunks: Vec<Result<Vec<f64>, ChannelError>> = (0..draws.div_ceil(DRAW_CHUNK))
                .into_par_iter()
                .map(|chunk| {
                    let mut acc = vec![0.0; times.len()];
                    for i in (chunk * DRAW_CHUNK)..((chunk + 1) * DRAW_CHUNK).min(draws) {
                        let r = sizes.sample(&mut rng::stream(seed, &[i as u64]));
                        let ratio = r / mean;
                        let p = eval(transport.diffusion / ratio, transport.drift * ratio * ratio)?;
                        acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
                    }
                    Ok(acc)
                })
                .collect();
            let mut total = vec![0.0; times.len()];
            for chunk in chunks {
                total.iter_mut().zip(chunk?).for_each(|(a, x)| *a += x);
            }
            total.iter_mut().for_each(|a| *a /= draws as f64);
            total
        }
        SizeMode::SizeAveraged { draws: 0, .. } => {
            return Err(ChannelError::SizeDistribution("size-averaged mode needs at least one draw".into()))
        }
        _ => eval(transport.diffusion, transport.drift)?,
    };
    Ok(ImpulseResponse {
        times: times.to_vec(),
        mean_counts: probabilities.iter().map(|p| n_tx * p).collect(),
        n_tx,
    })
}
