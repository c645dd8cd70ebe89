//! Particle-based Brownian dynamics in the duct.
//!
//! Particles take Euler–Maruyama steps with flow along `x`, magnetic drift
//! towards `z = 0` and isotropic diffusion. A wall crossing removes the
//! particle with the Andrews probability `P_ad`, otherwise it is mirrored
//! back; crossings are resolved `z` first, then `y`, each with its own trial.
//!
//! The `x` axis is unbounded and independent of `(y, z)`, so the drivers
//! sample `x` exactly at the requested times (aggregated Gaussian increments,
//! identical in law to stepping) and step `(y, z)` only up to the last time the
//! particle is inside the receiver's `x` range.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelError, ChannelGeometry};
use crate::comms::{detect, CommsError, OokLink, SerEstimate};
use crate::physics::{FluidEnvironment, RadiusDistribution, TransportCoefficients};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),
    #[error("adsorbing walls are not supported for the circular cross section")]
    CircularAdsorption,
    #[error(transparent)]
    Geometry(#[from] ChannelError),
    #[error(transparent)]
    Link(#[from] CommsError),
}

/// Duct cross section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossSection {
    Rectangular,
    /// Circle of equal area, radius `√(wh/π)`, resting on `z = 0`.
    Circular,
}

/// Particle size model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleSizing {
    Nominal,
    LogNormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Δt [s].
    pub time_step: f64,
    /// Independent realizations (impulse) or frames (SER).
    pub realizations: usize,
    pub cross_section: CrossSection,
    pub seed: u64,
    pub particle_sizing: ParticleSizing,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            time_step: 2e-3,
            realizations: 1000,
            cross_section: CrossSection::Rectangular,
            seed: 1,
            particle_sizing: ParticleSizing::LogNormal,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.time_step.is_finite() && self.time_step > 0.0) {
            return Err(SimError::InvalidConfig(format!("time step {}", self.time_step)));
        }
        if self.realizations == 0 {
            return Err(SimError::InvalidConfig("realizations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Nominal transport and the size law used to scale it per particle.
#[derive(Debug, Clone, Copy)]
pub struct SimPhysics {
    /// D_0 at the mean radius [m²/s].
    pub diffusion: f64,
    /// v_m0 at the mean radius [m/s].
    pub drift: f64,
    pub sizes: RadiusDistribution,
    pub fluid: FluidEnvironment,
}

impl SimPhysics {
    fn transport(&self, radius: f64) -> TransportCoefficients {
        TransportCoefficients::scaled(radius, self.sizes.mean(), self.diffusion, self.drift, &self.fluid)
    }

    fn draw_transport<R: Rng + ?Sized>(&self, sizing: ParticleSizing, rng: &mut R) -> TransportCoefficients {
        match sizing {
            ParticleSizing::Nominal => self.transport(self.sizes.mean()),
            ParticleSizing::LogNormal => self.transport(self.sizes.sample(rng)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    /// `(x, y, z)` [m].
    pub position: [f64; 3],
    pub transport: TransportCoefficients,
    /// Per-crossing adsorption probability for this particle and Δt.
    pub adsorption_probability: f64,
    pub alive: bool,
}

impl ParticleState {
    /// Particle at the transmitter.
    pub fn released(geometry: &ChannelGeometry, transport: TransportCoefficients, time_step: f64) -> Self {
        Self {
            position: [-geometry.tx_distance, geometry.tx_lateral, geometry.tx_height],
            transport,
            adsorption_probability: adsorption_probability(geometry.adsorption, transport.diffusion, time_step),
            alive: true,
        }
    }
}

/// Andrews fit for the per-crossing adsorption probability at a flat wall.
pub fn adsorption_probability(adsorption: f64, diffusion: f64, time_step: f64) -> f64 {
    let k = (adsorption * (time_step / (2.0 * diffusion)).sqrt()).clamp(0.0, 1.0);
    let p = k * (2.0 * std::f64::consts::PI).sqrt() - 3.33321 * k * k + 3.35669 * k.powi(3) - 1.52092 * k.powi(4);
    p.clamp(0.0, 1.0)
}

/// Cross-sectional domain and receiver window.
#[derive(Debug, Clone, Copy)]
struct Domain {
    cross: CrossSection,
    height: f64,
    half_width: f64,
    radius: f64,
    rx_half_width: f64,
    rx_height: f64,
    rx_half_length: f64,
}

impl Domain {
    fn new(geometry: &ChannelGeometry, cross: CrossSection) -> Result<Self, SimError> {
        geometry.validate()?;
        let radius = (geometry.width * geometry.height / std::f64::consts::PI).sqrt();
        if cross == CrossSection::Circular {
            if geometry.adsorption > 0.0 {
                return Err(SimError::CircularAdsorption);
            }
            let (y, z) = (geometry.tx_lateral, geometry.tx_height - radius);
            if y * y + z * z > radius * radius {
                return Err(SimError::InvalidConfig("release point outside the circular duct".into()));
            }
        }
        Ok(Self {
            cross,
            height: geometry.height,
            half_width: 0.5 * geometry.width,
            radius,
            rx_half_width: 0.5 * geometry.rx_width,
            rx_height: geometry.rx_height,
            rx_half_length: 0.5 * geometry.rx_length,
        })
    }

    #[cfg(test)]
    fn contains(&self, y: f64, z: f64) -> bool {
        match self.cross {
            CrossSection::Rectangular => (0.0..=self.height).contains(&z) && y.abs() <= self.half_width,
            CrossSection::Circular => y * y + (z - self.radius).powi(2) <= self.radius * self.radius,
        }
    }

    fn in_rx_section(&self, y: f64, z: f64) -> bool {
        y.abs() <= self.rx_half_width && (0.0..=self.rx_height).contains(&z)
    }

    /// Mirror `v` into `[lo, hi]`; each crossing is an adsorption trial.
    fn fold<R: Rng + ?Sized>(v: &mut f64, lo: f64, hi: f64, p_ad: f64, rng: &mut R) -> bool {
        loop {
            let flipped = if *v < lo {
                2.0 * lo - *v
            } else if *v > hi {
                2.0 * hi - *v
            } else {
                return true;
            };
            if p_ad > 0.0 && rng.random::<f64>() < p_ad {
                return false;
            }
            *v = flipped;
        }
    }

    /// Apply a `(y, z)` displacement and resolve the walls. Returns `false` if adsorbed.
    fn advance<R: Rng + ?Sized>(&self, y: &mut f64, z: &mut f64, dy: f64, dz: f64, p_ad: f64, rng: &mut R) -> bool {
        *y += dy;
        *z += dz;
        match self.cross {
            CrossSection::Rectangular => {
                Self::fold(z, 0.0, self.height, p_ad, rng) && Self::fold(y, -self.half_width, self.half_width, p_ad, rng)
            }
            CrossSection::Circular => {
                let r = self.radius;
                loop {
                    let (py, pz) = (*y, *z - r);
                    let rho = (py * py + pz * pz).sqrt();
                    if rho <= r {
                        return true;
                    }
                    let target = (2.0 * r - rho).abs();
                    let scale = target / rho;
                    *y = py * scale;
                    *z = r + pz * scale;
                }
            }
        }
    }
}

/// One Euler–Maruyama step of a particle, with wall handling.
pub fn step<R: Rng + ?Sized>(
    state: &ParticleState,
    config: &SimConfig,
    geometry: &ChannelGeometry,
    rng: &mut R,
) -> Result<ParticleState, SimError> {
    let domain = Domain::new(geometry, config.cross_section)?;
    let mut next = *state;
    if !state.alive {
        return Ok(next);
    }
    let dt = config.time_step;
    let sd = (2.0 * state.transport.diffusion * dt).sqrt();
    let gx: f64 = rng.sample(StandardNormal);
    let gy: f64 = rng.sample(StandardNormal);
    let gz: f64 = rng.sample(StandardNormal);
    let [x, mut y, mut z] = state.position;
    next.alive = domain.advance(
        &mut y,
        &mut z,
        sd * gy,
        -state.transport.drift_magnetic * dt + sd * gz,
        state.adsorption_probability,
        rng,
    );
    next.position = [x + geometry.flow_velocity * dt + sd * gx, y, z];
    Ok(next)
}

/// Alive particles inside the receiver box.
pub fn count_in_rx(states: &[ParticleState], geometry: &ChannelGeometry) -> usize {
    let (hx, hy) = (0.5 * geometry.rx_length, 0.5 * geometry.rx_width);
    states
        .iter()
        .filter(|s| {
            let [x, y, z] = s.position;
            s.alive && x.abs() <= hx && y.abs() <= hy && (0.0..=geometry.rx_height).contains(&z)
        })
        .count()
}

/// Mean observed count per sample time with its standard error across realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseEstimate {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub realizations: usize,
}

/// A sample request: step index of the `(y, z)` walk and output slot.
#[derive(Debug, Clone, Copy)]
struct Probe {
    time: f64,
    step: usize,
    slot: usize,
}

struct Tracer<'a> {
    domain: Domain,
    geometry: &'a ChannelGeometry,
    physics: &'a SimPhysics,
    config: &'a SimConfig,
}

impl Tracer<'_> {
    /// Follow one particle released at t = 0 and call `hit(slot)` for every
    /// probe (sorted by time) at which it is inside the receiver.
    fn trace<R: Rng + ?Sized>(&self, rng: &mut R, probes: &[Probe], needed: &mut Vec<Probe>, mut hit: impl FnMut(usize)) {
        let tr = self.physics.draw_transport(self.config.particle_sizing, rng);
        let dt = self.config.time_step;
        let (d, vf) = (self.geometry.tx_distance, self.geometry.flow_velocity);
        let mut x = -d;
        let mut t_prev = 0.0;
        needed.clear();
        for p in probes {
            let gap = p.time - t_prev;
            let g: f64 = rng.sample(StandardNormal);
            x += vf * gap + (2.0 * tr.diffusion * gap).sqrt() * g;
            t_prev = p.time;
            if x.abs() <= self.domain.rx_half_length {
                needed.push(*p);
            }
        }
        if needed.is_empty() {
            return;
        }
        needed.sort_by_key(|p| p.step);
        let p_ad = adsorption_probability(self.geometry.adsorption, tr.diffusion, dt);
        let sd = (2.0 * tr.diffusion * dt).sqrt();
        let dz_drift = -tr.drift_magnetic * dt;
        let (mut y, mut z) = (self.geometry.tx_lateral, self.geometry.tx_height);
        let mut step = 0usize;
        for p in needed.iter() {
            while step < p.step {
                let gy: f64 = rng.sample(StandardNormal);
                let gz: f64 = rng.sample(StandardNormal);
                if !self.domain.advance(&mut y, &mut z, sd * gy, dz_drift + sd * gz, p_ad, rng) {
                    return;
                }
                step += 1;
            }
            if self.domain.in_rx_section(y, z) {
                hit(p.slot);
            }
        }
    }
}

fn probes_for(times: &[f64], dt: f64) -> Result<Vec<Probe>, SimError> {
    let mut probes = Vec::with_capacity(times.len());
    for (slot, &time) in times.iter().enumerate() {
        if !(time.is_finite() && time >= 0.0) {
            return Err(SimError::InvalidConfig(format!("sample time {time}")));
        }
        probes.push(Probe { time, step: (time / dt).round() as usize, slot });
    }
    probes.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(probes)
}

/// Mean receiver counts at `sample_times` for `n_tx` particles released at t = 0.
pub fn run_impulse(
    config: &SimConfig,
    geometry: &ChannelGeometry,
    physics: &SimPhysics,
    n_tx: usize,
    sample_times: &[f64],
) -> Result<ImpulseEstimate, SimError> {
    config.validate()?;
    let domain = Domain::new(geometry, config.cross_section)?;
    let probes = probes_for(sample_times, config.time_step)?;
    let tracer = Tracer { domain, geometry, physics, config };
    let per_realization: Vec<Vec<u32>> = (0..config.realizations)
        .into_par_iter()
        .map(|r| {
            let mut counts = vec![0u32; sample_times.len()];
            let mut needed = Vec::with_capacity(probes.len());
            for p in 0..n_tx {
                let mut rng = rng::stream(config.seed, &[0, r as u64, p as u64]);
                tracer.trace(&mut rng, &probes, &mut needed, |slot| counts[slot] += 1);
            }
            counts
        })
        .collect();
    let n = config.realizations as f64;
    let mut mean = vec![0.0; sample_times.len()];
    let mut sq = vec![0.0; sample_times.len()];
    for counts in &per_realization {
        for (i, &c) in counts.iter().enumerate() {
            mean[i] += c as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for counts in &per_realization {
        for (i, &c) in counts.iter().enumerate() {
            sq[i] += (c as f64 - mean[i]).powi(2);
        }
    }
    let std_error = sq
        .iter()
        .map(|s| if config.realizations > 1 { (s / (n - 1.0) / n).sqrt() } else { 0.0 })
        .collect();
    Ok(ImpulseEstimate { times: sample_times.to_vec(), mean, std_error, realizations: config.realizations })
}

/// Empirical SER of the OOK link over `config.realizations` frames.
pub fn run_ser(
    config: &SimConfig,
    geometry: &ChannelGeometry,
    physics: &SimPhysics,
    link: &OokLink,
) -> Result<SerEstimate, SimError> {
    Ok(run_ser_nested(config, geometry, physics, link, &[link.particles_per_pulse])?[0])
}

/// Empirical SER for several pulse sizes from one simulation.
///
/// The first `n` particle streams of a pulse are shared by every pulse size
/// `≥ n`, as are the bit sequences, so the estimates use common random numbers.
pub fn run_ser_nested(
    config: &SimConfig,
    geometry: &ChannelGeometry,
    physics: &SimPhysics,
    link: &OokLink,
    n_tx_values: &[usize],
) -> Result<Vec<SerEstimate>, SimError> {
    config.validate()?;
    link.validate()?;
    if n_tx_values.is_empty() {
        return Ok(Vec::new());
    }
    let domain = Domain::new(geometry, config.cross_section)?;
    let k = link.sequence_length;
    let mut levels: Vec<usize> = n_tx_values.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let n_max = *levels.last().unwrap_or(&0);
    let lag_times = link.tap_times();
    let probes = probes_for(&lag_times, config.time_step)?;
    let tracer = Tracer { domain, geometry, physics, config };

    let per_frame: Vec<Vec<u64>> = (0..config.realizations)
        .into_par_iter()
        .map(|f| {
            let mut bit_rng = rng::stream(config.seed, &[1, f as u64, u64::MAX]);
            let bits: Vec<bool> = (0..k).map(|_| bit_rng.random::<bool>()).collect();
            // counts[level][slot], accumulated as differences over levels
            let mut counts = vec![vec![0u64; k]; levels.len()];
            let mut needed = Vec::with_capacity(k);
            for (j, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
                let lag_probes = &probes[..k - j];
                for p in 0..n_max {
                    let first = levels.partition_point(|&n| n <= p);
                    let mut rng = rng::stream(config.seed, &[1, f as u64, j as u64, p as u64]);
                    tracer.trace(&mut rng, lag_probes, &mut needed, |lag| counts[first][j + lag] += 1);
                }
            }
            for l in 1..levels.len() {
                for s in 0..k {
                    counts[l][s] += counts[l - 1][s];
                }
            }
            counts
                .iter()
                .map(|c| bits.iter().zip(c).filter(|(&b, &n)| detect(n, link.threshold) != b).count() as u64)
                .collect()
        })
        .collect();

    let symbols = (config.realizations * k) as u64;
    let mut errors = vec![0u64; levels.len()];
    for frame in &per_frame {
        for (e, x) in errors.iter_mut().zip(frame) {
            *e += x;
        }
    }
    Ok(n_tx_values
        .iter()
        .map(|n| {
            let l = levels.binary_search(n).unwrap_or(0);
            SerEstimate::from_counts(errors[l], symbols)
        })
        .collect())
}
