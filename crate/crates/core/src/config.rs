//! Run configuration: a sectioned TOML file with unit-suffixed keys.
//!
//! Every key is required and unknown keys are rejected. Values are converted
//! to SI on load. `configs/reference.toml` is the reference file and parses to
//! [`RunConfig::default`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use crate::channel::ChannelGeometry;
use crate::comms::OokLink;
use crate::physics::{self, FluidEnvironment, MagnetSpec, ParticleSpec};
use crate::simulator::{CrossSection, ParticleSizing, SimConfig};

/// The reference configuration file.
pub const REFERENCE_TOML: &str = include_str!("../configs/reference.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("unknown field `{0}`")]
    Unknown(String),
    #[error("field `{field}` must be {expected}")]
    Type { field: String, expected: &'static str },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Which magnet states a command evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnetSelection {
    On,
    Off,
    Both,
}

impl MagnetSelection {
    /// Magnet states in output order.
    pub fn states(&self) -> Vec<bool> {
        match self {
            MagnetSelection::On => vec![true],
            MagnetSelection::Off => vec![false],
            MagnetSelection::Both => vec![true, false],
        }
    }
}

/// Source of the nominal magnetic drift used by the channel model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftModel {
    /// Fixed v_m0 [m/s].
    Fixed(f64),
    /// Computed from the magnet and particle composition at mid-height.
    Field,
}

/// Parameter sweep run by the `ser` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SerSweep {
    ParticlesPerPulse,
    Drift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    /// [m]
    pub z_min: f64,
    /// [m]
    pub z_max: f64,
    pub points: usize,
    /// Radii for the drift profile [m].
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseGrid {
    /// [s]
    pub t_start: f64,
    /// [s]
    pub t_end: f64,
    pub points: usize,
    pub simulate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSweep {
    /// [m/s]
    pub vm0_min: f64,
    /// [m/s]
    pub vm0_max: f64,
    pub points: usize,
    /// Adsorption coefficients [m/s].
    pub adsorption: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerSettings {
    pub sweep: SerSweep,
    pub n_tx_values: Vec<usize>,
    /// [m/s]
    pub vm0_values: Vec<f64>,
    pub frames: usize,
    pub simulate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fluid: FluidEnvironment,
    pub magnet: MagnetSpec,
    pub particle: ParticleSpec,
    pub geometry: ChannelGeometry,
    pub drift_model: DriftModel,
    pub series_terms: usize,
    pub size_draws: usize,
    pub link: OokLink,
    /// Sample at `d / v_f` instead of `link.sample_offset`.
    pub sample_at_arrival: bool,
    pub sim: SimConfig,
    pub field: FieldGrid,
    pub impulse: ImpulseGrid,
    pub signal: SignalSweep,
    pub ser: SerSettings,
    pub magnet_selection: MagnetSelection,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fluid: FluidEnvironment::default(),
            magnet: MagnetSpec::default(),
            particle: ParticleSpec::default(),
            geometry: ChannelGeometry::default(),
            drift_model: DriftModel::Fixed(1e-6),
            series_terms: 10,
            size_draws: 10_000,
            link: OokLink::default(),
            sample_at_arrival: true,
            sim: SimConfig::default(),
            field: FieldGrid { z_min: -5e-3, z_max: 20e-3, points: 251, radii: vec![24.5e-9, 27.5e-9, 30.5e-9] },
            impulse: ImpulseGrid { t_start: 1.7, t_end: 2.3, points: 400, simulate: true },
            signal: SignalSweep { vm0_min: 0.0, vm0_max: 10e-6, points: 41, adsorption: vec![0.0, 0.1e-6, 0.5e-6, 1e-6] },
            ser: SerSettings {
                sweep: SerSweep::ParticlesPerPulse,
                n_tx_values: vec![100, 250, 500, 750, 1000],
                vm0_values: vec![0.0, 0.5e-6, 1e-6, 2e-6, 5e-6],
                frames: 10_000,
                simulate: true,
            },
            magnet_selection: MagnetSelection::Both,
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

impl RunConfig {
    /// Effective sampling offset t0.
    pub fn sample_offset(&self) -> f64 {
        if self.sample_at_arrival {
            self.geometry.arrival_time()
        } else {
            self.link.sample_offset
        }
    }

    /// Link with the effective sampling offset.
    pub fn effective_link(&self) -> OokLink {
        OokLink { sample_offset: self.sample_offset(), ..self.link }
    }

    /// Nominal diffusion coefficient at the mean radius.
    pub fn nominal_diffusion(&self) -> f64 {
        physics::diffusion_coefficient(self.particle.mean_radius, &self.fluid)
    }

    /// Nominal magnetic drift with the magnet on.
    pub fn nominal_drift(&self) -> f64 {
        match self.drift_model {
            DriftModel::Fixed(v) => v,
            DriftModel::Field => physics::drift_velocity(
                0.5 * self.geometry.height,
                self.particle.mean_radius,
                &self.fluid,
                &self.particle,
                &self.magnet,
            ),
        }
    }

    /// Check cross-field invariants of every constituent.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |field: &str, e: &dyn std::fmt::Display| ConfigError::Invalid { field: field.into(), reason: e.to_string() };
        self.fluid.validate().map_err(|e| inv("fluid", &e))?;
        self.magnet.validate().map_err(|e| inv("magnet", &e))?;
        self.particle.validate().map_err(|e| inv("particle", &e))?;
        self.geometry.validate().map_err(|e| inv("channel", &e))?;
        self.link.validate().map_err(|e| inv("link", &e))?;
        self.sim.validate().map_err(|e| inv("simulation", &e))?;
        if self.sim.cross_section == CrossSection::Circular && self.geometry.adsorption > 0.0 {
            return Err(inv("simulation.cross_section", &"circular duct requires adsorption_um_per_s = 0"));
        }
        if self.geometry.flow_velocity <= 0.0 && self.sample_at_arrival {
            return Err(inv("link.sample_at_arrival", &"needs a positive flow velocity"));
        }
        if !(self.field.z_max > self.field.z_min) {
            return Err(inv("field.z_max_mm", &"must exceed z_min_mm"));
        }
        if self.field.z_min < -self.magnet.standoff {
            return Err(inv("field.z_min_mm", &"must not lie below the magnet face"));
        }
        if !(self.impulse.t_end > self.impulse.t_start && self.impulse.t_start > 0.0) {
            return Err(inv("impulse", &"need 0 < t_start_s < t_end_s"));
        }
        if !(self.signal.vm0_max > self.signal.vm0_min) {
            return Err(inv("signal_sweep.vm0_max_um_per_s", &"must exceed vm0_min_um_per_s"));
        }
        Ok(())
    }

    /// Canonical TOML text of this configuration.
    pub fn to_toml_string(&self) -> String {
        let mut root = Table::new();
        let mut put = |section: &str, entries: Vec<(&str, Value)>| {
            let mut t = Table::new();
            for (k, v) in entries {
                t.insert(k.into(), v);
            }
            root.insert(section.into(), Value::Table(t));
        };
        // 12 significant digits absorb the rounding of unit conversions
        let canon = |x: f64| format!("{x:.11e}").parse::<f64>().unwrap_or(x);
        let f = |x: f64| Value::Float(canon(x));
        let i = |n: usize| Value::Integer(n as i64);
        let floats = |v: &[f64], scale: f64| Value::Array(v.iter().map(|x| Value::Float(canon(x / scale))).collect());
        put("fluid", vec![("viscosity_pa_s", f(self.fluid.viscosity)), ("temperature_k", f(self.fluid.temperature))]);
        put(
            "magnet",
            vec![
                ("strength_t", f(self.magnet.strength)),
                ("length_cm", f(self.magnet.length / 1e-2)),
                ("radius_cm", f(self.magnet.radius / 1e-2)),
                ("standoff_mm", f(self.magnet.standoff / 1e-3)),
            ],
        );
        put(
            "particle",
            vec![
                ("mean_radius_nm", f(self.particle.mean_radius / 1e-9)),
                ("radius_std_nm", f(self.particle.radius_std / 1e-9)),
                ("spion_volume_nm3", f(self.particle.spion_volume / 1e-27)),
                ("spion_concentration_per_nm3", f(self.particle.spion_concentration * 1e-27)),
                ("saturation_magnetization_a_per_m", f(self.particle.saturation_magnetization)),
            ],
        );
        let g = &self.geometry;
        let (model, drift) = match self.drift_model {
            DriftModel::Fixed(v) => ("fixed", v),
            DriftModel::Field => ("field", 0.0),
        };
        put(
            "channel",
            vec![
                ("height_um", f(g.height / 1e-6)),
                ("width_um", f(g.width / 1e-6)),
                ("tx_distance_mm", f(g.tx_distance / 1e-3)),
                ("tx_height_um", f(g.tx_height / 1e-6)),
                ("tx_lateral_um", f(g.tx_lateral / 1e-6)),
                ("rx_length_mm", f(g.rx_length / 1e-3)),
                ("rx_width_um", f(g.rx_width / 1e-6)),
                ("rx_height_um", f(g.rx_height / 1e-6)),
                ("flow_mm_per_s", f(g.flow_velocity / 1e-3)),
                ("adsorption_um_per_s", f(g.adsorption / 1e-6)),
                ("drift_model", Value::String(model.into())),
                ("drift_um_per_s", f(drift / 1e-6)),
                ("series_terms", i(self.series_terms)),
                ("size_draws", i(self.size_draws)),
            ],
        );
        let l = &self.link;
        put(
            "link",
            vec![
                ("symbol_interval_s", f(l.symbol_interval)),
                ("sample_offset_s", f(l.sample_offset)),
                ("sample_at_arrival", Value::Boolean(self.sample_at_arrival)),
                ("threshold", Value::Integer(l.threshold as i64)),
                ("particles_per_pulse", i(l.particles_per_pulse)),
                ("sequence_length", i(l.sequence_length)),
            ],
        );
        put(
            "simulation",
            vec![
                ("time_step_ms", f(self.sim.time_step / 1e-3)),
                ("realizations", i(self.sim.realizations)),
                (
                    "cross_section",
                    Value::String(
                        match self.sim.cross_section {
                            CrossSection::Rectangular => "rectangular",
                            CrossSection::Circular => "circular",
                        }
                        .into(),
                    ),
                ),
                (
                    "particle_sizing",
                    Value::String(
                        match self.sim.particle_sizing {
                            ParticleSizing::Nominal => "nominal",
                            ParticleSizing::LogNormal => "lognormal",
                        }
                        .into(),
                    ),
                ),
            ],
        );
        put(
            "field",
            vec![
                ("z_min_mm", f(self.field.z_min / 1e-3)),
                ("z_max_mm", f(self.field.z_max / 1e-3)),
                ("points", i(self.field.points)),
                ("radii_nm", floats(&self.field.radii, 1e-9)),
            ],
        );
        put(
            "impulse",
            vec![
                ("t_start_s", f(self.impulse.t_start)),
                ("t_end_s", f(self.impulse.t_end)),
                ("points", i(self.impulse.points)),
                ("simulate", Value::Boolean(self.impulse.simulate)),
            ],
        );
        put(
            "signal_sweep",
            vec![
                ("vm0_min_um_per_s", f(self.signal.vm0_min / 1e-6)),
                ("vm0_max_um_per_s", f(self.signal.vm0_max / 1e-6)),
                ("points", i(self.signal.points)),
                ("adsorption_um_per_s", floats(&self.signal.adsorption, 1e-6)),
            ],
        );
        put(
            "ser",
            vec![
                (
                    "sweep",
                    Value::String(
                        match self.ser.sweep {
                            SerSweep::ParticlesPerPulse => "particles_per_pulse",
                            SerSweep::Drift => "drift",
                        }
                        .into(),
                    ),
                ),
                ("n_tx_values", Value::Array(self.ser.n_tx_values.iter().map(|&n| i(n)).collect())),
                ("vm0_values_um_per_s", floats(&self.ser.vm0_values, 1e-6)),
                ("frames", i(self.ser.frames)),
                ("simulate", Value::Boolean(self.ser.simulate)),
            ],
        );
        put(
            "run",
            vec![
                (
                    "magnet",
                    Value::String(
                        match self.magnet_selection {
                            MagnetSelection::On => "on",
                            MagnetSelection::Off => "off",
                            MagnetSelection::Both => "both",
                        }
                        .into(),
                    ),
                ),
                ("output_dir", Value::String(self.output_dir.display().to_string())),
                ("seed", Value::Integer(self.seed as i64)),
            ],
        );
        toml::to_string(&root).unwrap_or_default()
    }
}

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

/// Parse and validate configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
        ConfigError::Parse { line, message: e.message().to_string() }
    })?;
    let mut doc = Document { root: &root, used: BTreeSet::new() };

    let mut s = doc.section("fluid")?;
    let fluid = FluidEnvironment { viscosity: s.positive("viscosity_pa_s")?, temperature: s.positive("temperature_k")? };
    s.finish()?;

    let mut s = doc.section("magnet")?;
    let magnet = MagnetSpec {
        strength: s.positive("strength_t")?,
        length: s.positive("length_cm")? * 1e-2,
        radius: s.positive("radius_cm")? * 1e-2,
        standoff: s.positive("standoff_mm")? * 1e-3,
    };
    s.finish()?;

    let mut s = doc.section("particle")?;
    let particle = ParticleSpec {
        mean_radius: s.positive("mean_radius_nm")? * 1e-9,
        radius_std: s.nonnegative("radius_std_nm")? * 1e-9,
        spion_volume: s.positive("spion_volume_nm3")? * 1e-27,
        spion_concentration: s.nonnegative("spion_concentration_per_nm3")? * 1e27,
        saturation_magnetization: s.positive("saturation_magnetization_a_per_m")?,
    };
    s.finish()?;

    let mut s = doc.section("channel")?;
    let geometry = ChannelGeometry {
        height: s.positive("height_um")? * 1e-6,
        width: s.positive("width_um")? * 1e-6,
        tx_distance: s.nonnegative("tx_distance_mm")? * 1e-3,
        tx_height: s.nonnegative("tx_height_um")? * 1e-6,
        tx_lateral: s.float("tx_lateral_um")? * 1e-6,
        rx_length: s.positive("rx_length_mm")? * 1e-3,
        rx_width: s.positive("rx_width_um")? * 1e-6,
        rx_height: s.positive("rx_height_um")? * 1e-6,
        flow_velocity: s.nonnegative("flow_mm_per_s")? * 1e-3,
        adsorption: s.nonnegative("adsorption_um_per_s")? * 1e-6,
    };
    let drift_value = s.nonnegative("drift_um_per_s")? * 1e-6;
    let drift_model = match s.choice("drift_model", &["fixed", "field"])? {
        "fixed" => DriftModel::Fixed(drift_value),
        _ => DriftModel::Field,
    };
    let series_terms = s.count("series_terms", 0)?;
    let size_draws = s.count("size_draws", 1)?;
    s.finish()?;

    let mut s = doc.section("link")?;
    let link = OokLink {
        symbol_interval: s.positive("symbol_interval_s")?,
        sample_offset: s.positive("sample_offset_s")?,
        threshold: u32::try_from(s.count("threshold", 1)?)
            .map_err(|_| ConfigError::Invalid { field: "link.threshold".into(), reason: "too large".into() })?,
        particles_per_pulse: s.count("particles_per_pulse", 1)?,
        sequence_length: s.count("sequence_length", 1)?,
    };
    let sample_at_arrival = s.boolean("sample_at_arrival")?;
    s.finish()?;

    let mut s = doc.section("simulation")?;
    let sim = SimConfig {
        time_step: s.positive("time_step_ms")? * 1e-3,
        realizations: s.count("realizations", 1)?,
        cross_section: match s.choice("cross_section", &["rectangular", "circular"])? {
            "rectangular" => CrossSection::Rectangular,
            _ => CrossSection::Circular,
        },
        seed: 0,
        particle_sizing: match s.choice("particle_sizing", &["nominal", "lognormal"])? {
            "nominal" => ParticleSizing::Nominal,
            _ => ParticleSizing::LogNormal,
        },
    };
    s.finish()?;

    let mut s = doc.section("field")?;
    let field = FieldGrid {
        z_min: s.float("z_min_mm")? * 1e-3,
        z_max: s.float("z_max_mm")? * 1e-3,
        points: s.count("points", 2)?,
        radii: s.floats("radii_nm", 1e-9)?,
    };
    if field.radii.iter().any(|&r| r <= 0.0) || field.radii.is_empty() {
        return Err(ConfigError::Invalid { field: "field.radii_nm".into(), reason: "need positive radii".into() });
    }
    s.finish()?;

    let mut s = doc.section("impulse")?;
    let impulse = ImpulseGrid {
        t_start: s.positive("t_start_s")?,
        t_end: s.positive("t_end_s")?,
        points: s.count("points", 2)?,
        simulate: s.boolean("simulate")?,
    };
    s.finish()?;

    let mut s = doc.section("signal_sweep")?;
    let signal = SignalSweep {
        vm0_min: s.nonnegative("vm0_min_um_per_s")? * 1e-6,
        vm0_max: s.nonnegative("vm0_max_um_per_s")? * 1e-6,
        points: s.count("points", 2)?,
        adsorption: s.floats("adsorption_um_per_s", 1e-6)?,
    };
    if signal.adsorption.iter().any(|&a| a < 0.0) {
        return Err(ConfigError::Invalid {
            field: "signal_sweep.adsorption_um_per_s".into(),
            reason: "must be >= 0".into(),
        });
    }
    s.finish()?;

    let mut s = doc.section("ser")?;
    let sweep = match s.choice("sweep", &["particles_per_pulse", "drift"])? {
        "particles_per_pulse" => SerSweep::ParticlesPerPulse,
        _ => SerSweep::Drift,
    };
    let n_tx_values = s
        .floats("n_tx_values", 1.0)?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(ConfigError::Invalid { field: "ser.n_tx_values".into(), reason: format!("{v} is not a positive integer") })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let vm0_values = s.floats("vm0_values_um_per_s", 1e-6)?;
    if vm0_values.iter().any(|&v| v < 0.0) {
        return Err(ConfigError::Invalid { field: "ser.vm0_values_um_per_s".into(), reason: "must be >= 0".into() });
    }
    let ser = SerSettings { sweep, n_tx_values, vm0_values, frames: s.count("frames", 1)?, simulate: s.boolean("simulate")? };
    s.finish()?;

    let mut s = doc.section("run")?;
    let magnet_selection = match s.choice("magnet", &["on", "off", "both"])? {
        "on" => MagnetSelection::On,
        "off" => MagnetSelection::Off,
        _ => MagnetSelection::Both,
    };
    let output_dir = PathBuf::from(s.string("output_dir")?);
    let seed = s.integer("seed")?;
    let seed = u64::try_from(seed).map_err(|_| ConfigError::Invalid { field: "run.seed".into(), reason: "must be >= 0".into() })?;
    s.finish()?;

    doc.finish()?;
    let config = RunConfig {
        fluid,
        magnet,
        particle,
        geometry,
        drift_model,
        series_terms,
        size_draws,
        link,
        sample_at_arrival,
        sim: SimConfig { seed, ..sim },
        field,
        impulse,
        signal,
        ser,
        magnet_selection,
        output_dir,
        seed,
    };
    config.validate()?;
    Ok(config)
}

struct Document<'a> {
    root: &'a Table,
    used: BTreeSet<String>,
}

impl<'a> Document<'a> {
    fn section(&mut self, name: &'static str) -> Result<Section<'a>, ConfigError> {
        self.used.insert(name.into());
        match self.root.get(name) {
            Some(Value::Table(t)) => Ok(Section { name, table: t, used: BTreeSet::new() }),
            Some(_) => Err(ConfigError::Type { field: name.into(), expected: "a table" }),
            None => Err(ConfigError::Missing(name.into())),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.root.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(ConfigError::Unknown(k.clone())),
            None => Ok(()),
        }
    }
}

struct Section<'a> {
    name: &'static str,
    table: &'a Table,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn path(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn get(&mut self, key: &'static str) -> Result<&'a Value, ConfigError> {
        self.used.insert(key);
        self.table.get(key).ok_or_else(|| ConfigError::Missing(self.path(key)))
    }

    fn float(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        let v = match self.get(key)? {
            Value::Float(x) => *x,
            Value::Integer(n) => *n as f64,
            _ => return Err(ConfigError::Type { field: self.path(key), expected: "a number" }),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::Invalid { field: self.path(key), reason: "must be finite".into() })
        }
    }

    fn positive(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        let v = self.float(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(ConfigError::Invalid { field: self.path(key), reason: format!("must be > 0, got {v}") })
        }
    }

    fn nonnegative(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        let v = self.float(key)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(ConfigError::Invalid { field: self.path(key), reason: format!("must be >= 0, got {v}") })
        }
    }

    fn integer(&mut self, key: &'static str) -> Result<i64, ConfigError> {
        match self.get(key)? {
            Value::Integer(n) => Ok(*n),
            _ => Err(ConfigError::Type { field: self.path(key), expected: "an integer" }),
        }
    }

    fn count(&mut self, key: &'static str, min: usize) -> Result<usize, ConfigError> {
        let n = self.integer(key)?;
        match usize::try_from(n) {
            Ok(v) if v >= min => Ok(v),
            _ => Err(ConfigError::Invalid { field: self.path(key), reason: format!("must be an integer >= {min}, got {n}") }),
        }
    }

    fn boolean(&mut self, key: &'static str) -> Result<bool, ConfigError> {
        match self.get(key)? {
            Value::Boolean(b) => Ok(*b),
            _ => Err(ConfigError::Type { field: self.path(key), expected: "a boolean" }),
        }
    }

    fn string(&mut self, key: &'static str) -> Result<&'a str, ConfigError> {
        match self.get(key)? {
            Value::String(s) => Ok(s.as_str()),
            _ => Err(ConfigError::Type { field: self.path(key), expected: "a string" }),
        }
    }

    fn choice(&mut self, key: &'static str, options: &[&'static str]) -> Result<&'static str, ConfigError> {
        let s = self.string(key)?;
        options.iter().copied().find(|o| *o == s).ok_or_else(|| ConfigError::Invalid {
            field: self.path(key),
            reason: format!("expected one of {options:?}, got {s:?}"),
        })
    }

    fn floats(&mut self, key: &'static str, scale: f64) -> Result<Vec<f64>, ConfigError> {
        let path = self.path(key);
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) if x.is_finite() => Ok(x * scale),
                    Value::Integer(n) => Ok(*n as f64 * scale),
                    _ => Err(ConfigError::Type { field: path.clone(), expected: "an array of numbers" }),
                })
                .collect(),
            _ => Err(ConfigError::Type { field: path, expected: "an array of numbers" }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(ConfigError::Unknown(self.path(k))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn reference_file_matches_default() {
        let c = parse_config_str(REFERENCE_TOML).unwrap();
        let d = RunConfig::default();
        assert!(close(c.geometry.height, d.geometry.height));
        assert!(close(c.particle.spion_concentration, d.particle.spion_concentration));
        assert!(close(c.particle.spion_volume, d.particle.spion_volume));
        assert!(close(c.magnet.length, d.magnet.length));
        assert!(close(c.sim.time_step, d.sim.time_step));
        assert!((c.nominal_diffusion() - 8e-12).abs() < 0.02 * 8e-12);
        assert_eq!(c.seed, d.seed);
        assert_eq!(c.link, d.link);
    }

    #[test]
    fn canonical_text_round_trips() {
        let d = RunConfig::default();
        let c = parse_config_str(&d.to_toml_string()).unwrap();
        assert_eq!(c.to_toml_string(), d.to_toml_string());
        assert_eq!(c.sim, SimConfig { seed: d.seed, ..d.sim });
    }

    #[test]
    fn missing_field_is_named() {
        let text = REFERENCE_TOML.replace("viscosity_pa_s = 1.0e-3\n", "");
        match parse_config_str(&text) {
            Err(ConfigError::Missing(f)) => assert_eq!(f, "fluid.viscosity_pa_s"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_height_is_rejected() {
        let text = REFERENCE_TOML.replace("height_um = 10.0", "height_um = -1.0");
        match parse_config_str(&text) {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "channel.height_um"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = REFERENCE_TOML.replace("[fluid]\n", "[fluid]\ncolour = 3\n");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Unknown(f)) if f == "fluid.colour"));
        let text = format!("{REFERENCE_TOML}\n[extra]\na = 1\n");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Unknown(f)) if f == "extra"));
    }

    #[test]
    fn syntax_errors_report_lines() {
        let text = "[fluid]\nviscosity_pa_s = 1e-3\ntemperature_k = = 300\n";
        match parse_config_str(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_types_are_rejected() {
        let text = REFERENCE_TOML.replace("realizations = 1000", "realizations = \"many\"");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Type { .. })));
    }

    #[test]
    fn field_drift_model_uses_physics() {
        let mut c = RunConfig::default();
        c.drift_model = DriftModel::Field;
        let v = c.nominal_drift();
        assert!(v > 1e-6 && v < 2e-6, "{v}");
    }
}
