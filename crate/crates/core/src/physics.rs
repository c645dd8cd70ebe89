//! Magnetophysics of composite nanoparticles.
//!
//! A particle of hydrodynamic radius `R` carries `N_s = C_s · 4/3 π R³`
//! superparamagnetic cores of volume `V_s`. Each core magnetizes along the
//! Langevin law, the resulting force is balanced by Stokes drag, and the
//! terminal velocity is the magnetic drift. The magnet is a cylinder evaluated
//! on its symmetry axis; `z` is the height above the channel bottom, so the
//! distance to the magnet face is `z + standoff`.
//!
//! All quantities are strict SI.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

/// Boltzmann constant [J/K].
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Below this argument the Langevin function switches to its series expansion.
const LANGEVIN_SERIES_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("{field} must be {requirement} (got {value})")]
    InvalidParameter {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

fn require(field: &'static str, value: f64, ok: bool, requirement: &'static str) -> Result<(), PhysicsError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(PhysicsError::InvalidParameter { field, requirement, value })
    }
}

/// Carrier fluid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidEnvironment {
    /// Dynamic viscosity η [kg·m⁻¹·s⁻¹].
    pub viscosity: f64,
    /// Absolute temperature [K].
    pub temperature: f64,
}

impl FluidEnvironment {
    pub fn new(viscosity: f64, temperature: f64) -> Result<Self, PhysicsError> {
        let env = Self { viscosity, temperature };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        require("viscosity", self.viscosity, self.viscosity > 0.0, "> 0")?;
        require("temperature", self.temperature, self.temperature > 0.0, "> 0")
    }

    /// Thermal energy `k_B T` [J].
    pub fn thermal_energy(&self) -> f64 {
        BOLTZMANN * self.temperature
    }
}

impl Default for FluidEnvironment {
    /// Water at room temperature.
    fn default() -> Self {
        Self { viscosity: 1e-3, temperature: 300.0 }
    }
}

/// Cylindrical permanent magnet below the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetSpec {
    /// Flux-density scale `B_0` [T].
    pub strength: f64,
    /// Magnet length [m].
    pub length: f64,
    /// Magnet radius [m].
    pub radius: f64,
    /// Distance from the magnet face to the channel bottom [m].
    pub standoff: f64,
}

impl MagnetSpec {
    pub fn new(strength: f64, length: f64, radius: f64, standoff: f64) -> Result<Self, PhysicsError> {
        let magnet = Self { strength, length, radius, standoff };
        magnet.validate()?;
        Ok(magnet)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        require("magnet strength", self.strength, self.strength > 0.0, "> 0")?;
        require("magnet length", self.length, self.length > 0.0, "> 0")?;
        require("magnet radius", self.radius, self.radius > 0.0, "> 0")?;
        require("magnet standoff", self.standoff, self.standoff > 0.0, "> 0")
    }
}

impl Default for MagnetSpec {
    /// Handheld 1 T magnet, 5 cm long, 0.5 cm radius, 5 mm below the channel.
    fn default() -> Self {
        Self { strength: 1.0, length: 0.05, radius: 0.005, standoff: 0.005 }
    }
}

/// Composite particle: magnetic cores embedded in a non-magnetic coating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleSpec {
    /// Arithmetic mean of the hydrodynamic radius [m].
    pub mean_radius: f64,
    /// Arithmetic standard deviation of the hydrodynamic radius [m].
    pub radius_std: f64,
    /// Volume of one core [m³].
    pub spion_volume: f64,
    /// Number of cores per unit particle volume [m⁻³].
    pub spion_concentration: f64,
    /// Saturation magnetization of the core material [A/m].
    pub saturation_magnetization: f64,
}

impl ParticleSpec {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        require("mean radius", self.mean_radius, self.mean_radius > 0.0, "> 0")?;
        require("radius std", self.radius_std, self.radius_std >= 0.0, ">= 0")?;
        require("SPION volume", self.spion_volume, self.spion_volume > 0.0, "> 0")?;
        require(
            "SPION concentration",
            self.spion_concentration,
            self.spion_concentration >= 0.0,
            ">= 0",
        )?;
        require(
            "saturation magnetization",
            self.saturation_magnetization,
            self.saturation_magnetization > 0.0,
            "> 0",
        )
    }

    /// Expected number of cores in a particle of the given radius.
    pub fn spion_count(&self, radius: f64) -> f64 {
        self.spion_concentration * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3)
    }

    /// Langevin argument per unit flux density, `V_s M_sat / (k_B T)` [1/T].
    fn langevin_scale(&self, env: &FluidEnvironment) -> f64 {
        self.spion_volume * self.saturation_magnetization / env.thermal_energy()
    }

    /// Prefactor `R² C_s 2 V_s / (9η)` of the terminal drift.
    fn drift_prefactor(&self, radius: f64, env: &FluidEnvironment) -> f64 {
        radius * radius * self.spion_concentration * 2.0 * self.spion_volume / (9.0 * env.viscosity)
    }
}

impl Default for ParticleSpec {
    /// 27.5 nm ± 3 nm magnetite composites, 450 nm³ cores at 1.23e-3 nm⁻³.
    fn default() -> Self {
        Self {
            mean_radius: 27.5e-9,
            radius_std: 3e-9,
            spion_volume: 4.5e-25,
            spion_concentration: 1.23e24,
            saturation_magnetization: 4.75e5,
        }
    }
}

/// Transport coefficients of one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportCoefficients {
    /// Diffusion coefficient D [m²/s].
    pub diffusion: f64,
    /// Magnitude of the downward magnetic drift v_m [m/s].
    pub drift_magnetic: f64,
    /// Stokes friction coefficient ζ [kg/s].
    pub friction: f64,
    /// Hydrodynamic radius [m].
    pub radius: f64,
}

impl TransportCoefficients {
    /// Coefficients for `radius`, with the drift scaled from a nominal value
    /// `drift_nominal` at the mean radius (`v_m ∝ R²`, `D ∝ 1/R`).
    pub fn scaled(radius: f64, mean_radius: f64, diffusion_nominal: f64, drift_nominal: f64, env: &FluidEnvironment) -> Self {
        let ratio = radius / mean_radius;
        let diffusion = diffusion_nominal / ratio;
        Self {
            diffusion,
            drift_magnetic: drift_nominal * ratio * ratio,
            friction: env.thermal_energy() / diffusion,
            radius,
        }
    }
}

/// Langevin function `coth(s) − 1/s`.
pub fn langevin(s: f64) -> f64 {
    if s.abs() < LANGEVIN_SERIES_THRESHOLD {
        let s2 = s * s;
        s * (1.0 / 3.0 + s2 * (-1.0 / 45.0 + s2 * (2.0 / 945.0 + s2 * (-1.0 / 4725.0 + s2 * 2.0 / 93555.0))))
    } else {
        1.0 / s.tanh() - 1.0 / s
    }
}

/// `d(s·L(s))/ds = coth(s) − s/sinh²(s)`.
///
/// This is the factor relating `d(M·B)/dz` to `M_sat·B'(z)`.
fn langevin_product_slope(s: f64) -> f64 {
    let a = s.abs();
    let value = if a < 0.1 {
        let a2 = a * a;
        a * (2.0 / 3.0 + a2 * (-4.0 / 45.0 + a2 * (12.0 / 945.0 + a2 * (-8.0 / 4725.0))))
    } else {
        let e = (-2.0 * a).exp();
        1.0 / a.tanh() - 4.0 * a * e / ((1.0 - e) * (1.0 - e))
    };
    value.copysign(s)
}

/// Mean magnetization of one core at flux density `b` [A/m].
pub fn magnetization(b: f64, env: &FluidEnvironment, spec: &ParticleSpec) -> f64 {
    spec.saturation_magnetization * langevin(spec.langevin_scale(env) * b)
}

/// Linear susceptibility `M_sat² V_s / (3 k_B T)` of the small-field regime [A/(m·T)].
pub fn small_field_susceptibility(env: &FluidEnvironment, spec: &ParticleSpec) -> f64 {
    spec.saturation_magnetization.powi(2) * spec.spion_volume / (3.0 * env.thermal_energy())
}

/// `a/√(a²+R²) − b/√(b²+R²)` without cancellation for `a > b ≥ 0`.
fn axial_difference(a: f64, b: f64, r: f64) -> f64 {
    let r2 = r * r;
    let qa = (a * a + r2).sqrt();
    let qb = (b * b + r2).sqrt();
    if b >= 0.0 {
        r2 * (a - b) * (a + b) / (qa * qb * (a * qb + b * qa))
    } else {
        a / qa - b / qb
    }
}

/// On-axis flux density of the cylindrical magnet at height `z` above the channel bottom [T].
pub fn flux_density(z: f64, magnet: &MagnetSpec) -> f64 {
    let face = z + magnet.standoff;
    0.5 * magnet.strength * axial_difference(face + magnet.length, face, magnet.radius)
}

/// `dB/dz` on the axis [T/m]; negative above the magnet.
pub fn flux_gradient(z: f64, magnet: &MagnetSpec) -> f64 {
    let face = z + magnet.standoff;
    let r2 = magnet.radius * magnet.radius;
    let far = face + magnet.length;
    0.5 * magnet.strength * (r2 / (far * far + r2).powf(1.5) - r2 / (face * face + r2).powf(1.5))
}

/// Magnitude of the downward magnetic drift at height `z` for a particle of `radius` [m/s].
pub fn drift_velocity(
    z: f64,
    radius: f64,
    env: &FluidEnvironment,
    spec: &ParticleSpec,
    magnet: &MagnetSpec,
) -> f64 {
    let b = flux_density(z, magnet);
    let slope = langevin_product_slope(spec.langevin_scale(env) * b);
    -spec.drift_prefactor(radius, env) * spec.saturation_magnetization * slope * flux_gradient(z, magnet)
}

/// Field regime for the closed-form drift approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRegime {
    /// Linearised Langevin law, `M = χB`: drift ∝ `B·B'`.
    SmallField,
    /// Saturated cores, `M = M_sat`: drift ∝ `B'`.
    LargeField,
}

/// Drift approximation valid far from (`SmallField`) or close to (`LargeField`) the magnet.
pub fn drift_velocity_approx(
    z: f64,
    regime: FieldRegime,
    radius: f64,
    env: &FluidEnvironment,
    spec: &ParticleSpec,
    magnet: &MagnetSpec,
) -> f64 {
    let gradient = flux_gradient(z, magnet);
    let prefactor = spec.drift_prefactor(radius, env);
    match regime {
        FieldRegime::SmallField => {
            -2.0 * prefactor * small_field_susceptibility(env, spec) * flux_density(z, magnet) * gradient
        }
        FieldRegime::LargeField => -prefactor * spec.saturation_magnetization * gradient,
    }
}

/// Stokes friction `6πηR` [kg/s].
pub fn friction_coefficient(radius: f64, env: &FluidEnvironment) -> f64 {
    6.0 * std::f64::consts::PI * env.viscosity * radius
}

/// Stokes–Einstein diffusion coefficient `k_B T / (6πηR)` [m²/s].
pub fn diffusion_coefficient(radius: f64, env: &FluidEnvironment) -> f64 {
    env.thermal_energy() / friction_coefficient(radius, env)
}

/// All transport coefficients of a particle of `radius` at height `z`.
pub fn transport_coefficients(
    z: f64,
    radius: f64,
    env: &FluidEnvironment,
    spec: &ParticleSpec,
    magnet: &MagnetSpec,
) -> TransportCoefficients {
    let friction = friction_coefficient(radius, env);
    TransportCoefficients {
        diffusion: env.thermal_energy() / friction,
        drift_magnetic: drift_velocity(z, radius, env, spec, magnet),
        friction,
        radius,
    }
}

/// Log-normal law of the hydrodynamic radius, parameterised by its
/// arithmetic mean and standard deviation.
#[derive(Debug, Clone, Copy)]
pub struct RadiusDistribution {
    mean: f64,
    law: Option<LogNormal<f64>>,
}

impl RadiusDistribution {
    pub fn new(mean: f64, std: f64) -> Result<Self, PhysicsError> {
        require("mean radius", mean, mean > 0.0, "> 0")?;
        require("radius std", std, std >= 0.0, ">= 0")?;
        if std == 0.0 {
            return Ok(Self { mean, law: None });
        }
        let (mu, sigma) = lognormal_parameters(mean, std);
        let law = LogNormal::new(mu, sigma).map_err(|_| PhysicsError::InvalidParameter {
            field: "radius std",
            requirement: "finite",
            value: std,
        })?;
        Ok(Self { mean, law: Some(law) })
    }

    pub fn from_spec(spec: &ParticleSpec) -> Result<Self, PhysicsError> {
        Self::new(spec.mean_radius, spec.radius_std)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn is_degenerate(&self) -> bool {
        self.law.is_none()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.law {
            Some(law) => law.sample(rng),
            None => self.mean,
        }
    }
}

/// Underlying normal parameters `(μ_ln, σ_ln)` for a log-normal variable with
/// arithmetic mean `mean` and standard deviation `std`.
pub fn lognormal_parameters(mean: f64, std: f64) -> (f64, f64) {
    let var_ln = (std * std / (mean * mean)).ln_1p();
    (mean.ln() - 0.5 * var_ln, var_ln.sqrt())
}

/// Draw one hydrodynamic radius from the particle size law.
pub fn sample_radius<R: Rng + ?Sized>(spec: &ParticleSpec, rng: &mut R) -> Result<f64, PhysicsError> {
    Ok(RadiusDistribution::from_spec(spec)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn langevin_limits() {
        assert_eq!(langevin(0.0), 0.0);
        assert!(rel(langevin(1e-6), 1e-6 / 3.0) < 1e-12);
        // coth(10) - 0.1, coth(10) = 1.0000000041223072
        assert!((langevin(10.0) - 0.900_000_004_122_307_2).abs() < 1e-15);
        assert!((langevin(-3.0) + langevin(3.0)).abs() < 1e-15);
        // continuity across the series threshold
        let below = langevin(LANGEVIN_SERIES_THRESHOLD * (1.0 - 1e-9));
        let above = langevin(LANGEVIN_SERIES_THRESHOLD * (1.0 + 1e-9));
        assert!(rel(above, below) < 1e-7);
    }

    #[test]
    fn product_slope_matches_finite_difference() {
        for &s in &[1e-3_f64, 0.05, 0.0999, 0.1001, 0.5, 2.0, 7.4, 30.0, 400.0] {
            let d = 1e-5 * s.max(1e-2);
            let fd = ((s + d) * langevin(s + d) - (s - d) * langevin(s - d)) / (2.0 * d);
            assert!(rel(langevin_product_slope(s), fd) < 1e-7, "s = {s}");
        }
        assert_eq!(langevin_product_slope(0.0), 0.0);
    }

    #[test]
    fn magnetization_limits() {
        let env = FluidEnvironment::default();
        let spec = ParticleSpec::default();
        assert_eq!(magnetization(0.0, &env, &spec), 0.0);
        assert!(rel(magnetization(1e3, &env, &spec), spec.saturation_magnetization) < 1e-3);
        let b = 1e-8;
        let alpha = small_field_susceptibility(&env, &spec);
        assert!(rel(magnetization(b, &env, &spec), alpha * b) < 1e-9);
    }

    #[test]
    fn field_far_away_vanishes() {
        let magnet = MagnetSpec::default();
        assert!(flux_density(1e3, &magnet).abs() < 1e-12);
        assert!(flux_gradient(1e3, &magnet).abs() < 1e-12);
        assert!(flux_density(0.0, &magnet) > 0.1);
    }

    #[test]
    fn diffusion_scales_inversely_with_radius() {
        let env = FluidEnvironment::default();
        let d1 = diffusion_coefficient(20e-9, &env);
        let d2 = diffusion_coefficient(40e-9, &env);
        assert!(rel(d1, 2.0 * d2) < 1e-15);
    }

    #[test]
    fn einstein_relation_holds() {
        let env = FluidEnvironment::default();
        let c = transport_coefficients(5e-6, 31e-9, &env, &ParticleSpec::default(), &MagnetSpec::default());
        assert!(rel(c.diffusion * c.friction, env.thermal_energy()) < 1e-12);
        let s = TransportCoefficients::scaled(31e-9, 27.5e-9, 8e-12, 1e-6, &env);
        assert!(rel(s.diffusion * s.friction, env.thermal_energy()) < 1e-12);
    }

    #[test]
    fn degenerate_radius_returns_mean() {
        let mut spec = ParticleSpec::default();
        spec.radius_std = 0.0;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(sample_radius(&spec, &mut rng).unwrap(), spec.mean_radius);
        }
    }

    #[test]
    fn rejects_nonpositive_mean_radius() {
        let mut spec = ParticleSpec::default();
        spec.mean_radius = 0.0;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        assert!(sample_radius(&spec, &mut rng).is_err());
    }

    #[test]
    fn lognormal_parameters_reproduce_moments() {
        let (mu, sigma) = lognormal_parameters(27.5e-9, 3e-9);
        let mean = (mu + 0.5 * sigma * sigma).exp();
        let var = ((sigma * sigma).exp() - 1.0) * (2.0 * mu + sigma * sigma).exp();
        assert!(rel(mean, 27.5e-9) < 1e-12);
        assert!(rel(var.sqrt(), 3e-9) < 1e-10);
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(FluidEnvironment::new(-1.0, 300.0).is_err());
        assert!(FluidEnvironment::new(1e-3, 0.0).is_err());
        assert!(MagnetSpec::new(1.0, 0.05, 0.0, 0.005).is_err());
        let mut spec = ParticleSpec::default();
        spec.radius_std = -1.0;
        assert!(spec.validate().is_err());
    }
}
