//! Experiment commands and CSV artifacts.
//!
//! Each command turns a [`RunConfig`] into a [`CsvTable`]; [`run`] writes the
//! table to `<out>/<command>.csv` together with a one-line manifest holding
//! the config hash, seed and crate version.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{
    impulse_response, ChannelError, ChannelGeometry, ChannelModel, EigenCache, NominalTransport, ResponseOptions,
    SizeMode,
};
use crate::comms::{ser_exact, ser_no_isi, CommsError};
use crate::config::{parse_config, ConfigError, MagnetSelection, RunConfig, SerSweep};
use crate::physics::{self, FieldRegime, RadiusDistribution};
use crate::simulator::{run_impulse, run_ser_nested, ParticleSizing, SimConfig, SimError, SimPhysics};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => 4,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<CommsError> for CliError {
    fn from(e: CommsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::CircularAdsorption => {
                CliError::Config(ConfigError::Invalid { field: "simulation".into(), reason: e.to_string() })
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "magnetolink", version, about = "Magnetic-nanoparticle duct channel experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// On-axis flux density and gradient of the magnet.
    Field,
    /// Magnetic drift velocity profile (exact and both approximations).
    Drift,
    /// Impulse response, analytic and simulated.
    Impulse,
    /// Observation probability at t0 over a range of drift velocities.
    SignalSweep,
    /// Symbol error rate, analytic and simulated.
    Ser,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Field => "field",
            Command::Drift => "drift",
            Command::Impulse => "impulse",
            Command::SignalSweep => "signal_sweep",
            Command::Ser => "ser",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MagnetArg {
    On,
    Off,
    Both,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Configuration file (defaults to the built-in reference parameters).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub magnet: Option<MagnetArg>,
    /// Simulation realizations (impulse) and frames (SER).
    #[arg(long, global = true)]
    pub realizations: Option<usize>,
    /// Simulation time step [s].
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Higher modes kept in the series.
    #[arg(long = "series-terms", global = true)]
    pub series_terms: Option<usize>,
}

/// Load the configuration and apply command-line overrides.
pub fn resolve_config(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut c = match &o.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &o.out {
        c.output_dir = out.clone();
    }
    if let Some(seed) = o.seed {
        c.seed = seed;
    }
    c.sim.seed = c.seed;
    if let Some(m) = o.magnet {
        c.magnet_selection = match m {
            MagnetArg::On => MagnetSelection::On,
            MagnetArg::Off => MagnetSelection::Off,
            MagnetArg::Both => MagnetSelection::Both,
        };
    }
    if let Some(r) = o.realizations {
        c.sim.realizations = r;
        c.ser.frames = r;
    }
    if let Some(dt) = o.dt {
        c.sim.time_step = dt;
    }
    if let Some(n) = o.series_terms {
        c.series_terms = n;
    }
    if c.ser.frames == 0 {
        return Err(ConfigError::Invalid { field: "ser.frames".into(), reason: "must be >= 1".into() }.into());
    }
    c.validate()?;
    Ok(c)
}

/// Columns and rows of one artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Single header row, scientific notation with 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn label(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

fn trim(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn cmd_field(c: &RunConfig) -> CsvTable {
    let mut t = CsvTable::new(vec!["z_m".into(), "B_T".into(), "dBdz_T_per_m".into()]);
    for z in linspace(c.field.z_min, c.field.z_max, c.field.points) {
        t.rows.push(vec![z, physics::flux_density(z, &c.magnet), physics::flux_gradient(z, &c.magnet)]);
    }
    t
}

pub fn cmd_drift(c: &RunConfig) -> CsvTable {
    let mut header = vec!["z_m".to_string()];
    for r in &c.field.radii {
        let tag = trim(r / 1e-9);
        header.push(format!("vm_exact_r{tag}nm"));
        header.push(format!("vm_smallB_r{tag}nm"));
        header.push(format!("vm_largeB_r{tag}nm"));
    }
    let mut t = CsvTable::new(header);
    for z in linspace(c.field.z_min, c.field.z_max, c.field.points) {
        let mut row = vec![z];
        for &r in &c.field.radii {
            row.push(physics::drift_velocity(z, r, &c.fluid, &c.particle, &c.magnet));
            for regime in [FieldRegime::SmallField, FieldRegime::LargeField] {
                row.push(physics::drift_velocity_approx(z, regime, r, &c.fluid, &c.particle, &c.magnet));
            }
        }
        t.rows.push(row);
    }
    t
}

fn sizes(c: &RunConfig) -> Result<RadiusDistribution, CliError> {
    RadiusDistribution::from_spec(&c.particle)
        .map_err(|e| CliError::Config(ConfigError::Invalid { field: "particle".into(), reason: e.to_string() }))
}

fn sim_physics(c: &RunConfig, drift: f64) -> Result<SimPhysics, CliError> {
    Ok(SimPhysics { diffusion: c.nominal_diffusion(), drift, sizes: sizes(c)?, fluid: c.fluid })
}

fn drift_for(c: &RunConfig, on: bool) -> f64 {
    if on {
        c.nominal_drift()
    } else {
        0.0
    }
}

pub fn cmd_impulse(c: &RunConfig) -> Result<CsvTable, CliError> {
    let times = linspace(c.impulse.t_start, c.impulse.t_end, c.impulse.points);
    let states = c.magnet_selection.states();
    let mut header = vec!["t_s".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let n_tx = c.link.particles_per_pulse;
    let sizes = sizes(c)?;
    for &on in &states {
        let l = label(on);
        let drift = drift_for(c, on);
        let tr = NominalTransport { diffusion: c.nominal_diffusion(), drift };
        let opts = ResponseOptions { terms: c.series_terms, mode: SizeMode::Nominal, allow_early_times: false };
        let nominal = impulse_response(&c.geometry, tr, &sizes, 1.0, &times, opts, None)?;
        let model = ChannelModel::new(c.geometry, tr.diffusion, drift, 0)?;
        let n0 = times.iter().map(|&t| model.asymptotic_observation(t)).collect::<Result<Vec<_>, _>>()?;
        header.push(format!("analytic_nominal_{l}"));
        header.push(format!("analytic_N0_{l}"));
        columns.push(nominal.mean_counts);
        columns.push(n0);
        if c.impulse.simulate {
            let est = run_impulse(&c.sim, &c.geometry, &sim_physics(c, drift)?, n_tx, &times)?;
            header.push(format!("sim_mean_{l}"));
            header.push(format!("sim_stderr_{l}"));
            columns.push(est.mean.iter().map(|m| m / n_tx as f64).collect());
            columns.push(est.std_error.iter().map(|s| s / n_tx as f64).collect());
        }
    }
    let mut t = CsvTable::new(header);
    for (i, &time) in times.iter().enumerate() {
        let mut row = vec![time];
        row.extend(columns.iter().map(|col| col[i]));
        t.rows.push(row);
    }
    Ok(t)
}

fn size_mode(c: &RunConfig) -> SizeMode {
    SizeMode::SizeAveraged { draws: c.size_draws, seed: c.seed }
}

pub fn cmd_signal_sweep(c: &RunConfig) -> Result<CsvTable, CliError> {
    let t0 = c.sample_offset();
    let grid = linspace(c.signal.vm0_min, c.signal.vm0_max, c.signal.points);
    let sizes = sizes(c)?;
    let cache = EigenCache::default();
    let n = c.series_terms;
    let mut header = vec!["vm0_m_per_s".to_string()];
    for &a in &c.signal.adsorption {
        let tag = trim(a / 1e-6);
        for kind in ["nominal", "averaged"] {
            header.push(format!("{kind}_N{n}_a{tag}um_s"));
            header.push(format!("{kind}_N0_a{tag}um_s"));
        }
    }
    let mut t = CsvTable::new(header);
    for &vm0 in &grid {
        let mut row = vec![vm0];
        for &a in &c.signal.adsorption {
            let g = ChannelGeometry { adsorption: a, ..c.geometry };
            let tr = NominalTransport { diffusion: c.nominal_diffusion(), drift: vm0 };
            for mode in [SizeMode::Nominal, size_mode(c)] {
                for terms in [n, 0] {
                    let opts = ResponseOptions { terms, mode, allow_early_times: false };
                    let ir = impulse_response(&g, tr, &sizes, 1.0, &[t0], opts, Some(&cache))?;
                    row.push(ir.mean_counts[0]);
                }
            }
        }
        t.rows.push(row);
    }
    Ok(t)
}

/// Per-particle observation probabilities at the tap times.
fn tap_probabilities(c: &RunConfig, drift: f64, cache: &EigenCache) -> Result<Vec<f64>, CliError> {
    let link = c.effective_link();
    let mode = match c.sim.particle_sizing {
        ParticleSizing::Nominal => SizeMode::Nominal,
        ParticleSizing::LogNormal => size_mode(c),
    };
    let tr = NominalTransport { diffusion: c.nominal_diffusion(), drift };
    let opts = ResponseOptions { terms: c.series_terms, mode, allow_early_times: false };
    let ir = impulse_response(&c.geometry, tr, &sizes(c)?, 1.0, &link.tap_times(), opts, Some(cache))?;
    Ok(crate::comms::channel_taps(&link, &ir)?)
}

pub fn cmd_ser(c: &RunConfig) -> Result<CsvTable, CliError> {
    let link = c.effective_link();
    let cache = EigenCache::default();
    let sim_cfg = SimConfig { realizations: c.ser.frames, ..c.sim };
    let analytic = |probs: &[f64], n: usize| -> Result<(f64, f64), CliError> {
        let taps: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
        let l = crate::comms::OokLink { particles_per_pulse: n, ..link };
        Ok((ser_no_isi(taps[0]), ser_exact(&l, &taps)?))
    };
    let columns = |header: &mut Vec<String>, l: &str| {
        header.push(format!("pe_no_isi_{l}"));
        header.push(format!("pe_enum_{l}"));
        if c.ser.simulate {
            header.push(format!("pe_sim_{l}"));
            header.push(format!("pe_sim_stderr_{l}"));
        }
    };
    match c.ser.sweep {
        SerSweep::ParticlesPerPulse => {
            let states = c.magnet_selection.states();
            let mut header = vec!["n_tx".to_string()];
            states.iter().for_each(|&on| columns(&mut header, label(on)));
            let mut per_state = Vec::new();
            for &on in &states {
                let drift = drift_for(c, on);
                let probs = tap_probabilities(c, drift, &cache)?;
                let sim = if c.ser.simulate {
                    Some(run_ser_nested(&sim_cfg, &c.geometry, &sim_physics(c, drift)?, &link, &c.ser.n_tx_values)?)
                } else {
                    None
                };
                per_state.push((probs, sim));
            }
            let mut t = CsvTable::new(header);
            for (i, &n) in c.ser.n_tx_values.iter().enumerate() {
                let mut row = vec![n as f64];
                for (probs, sim) in &per_state {
                    let (a, b) = analytic(probs, n)?;
                    row.extend([a, b]);
                    if let Some(s) = sim {
                        row.extend([s[i].ser, s[i].std_error]);
                    }
                }
                t.rows.push(row);
            }
            Ok(t)
        }
        SerSweep::Drift => {
            let mut header = vec!["vm0_m_per_s".to_string()];
            columns(&mut header, "on");
            let mut t = CsvTable::new(header);
            let n = link.particles_per_pulse;
            for &vm0 in &c.ser.vm0_values {
                let probs = tap_probabilities(c, vm0, &cache)?;
                let (a, b) = analytic(&probs, n)?;
                let mut row = vec![vm0, a, b];
                if c.ser.simulate {
                    let s = run_ser_nested(&sim_cfg, &c.geometry, &sim_physics(c, vm0)?, &link, &[n])?[0];
                    row.extend([s.ser, s.std_error]);
                }
                t.rows.push(row);
            }
            Ok(t)
        }
    }
}

/// Hex SHA-256 of the canonical configuration text. The output directory is
/// not part of the experiment and is left out.
pub fn config_hash(c: &RunConfig) -> String {
    let canonical = RunConfig { output_dir: RunConfig::default().output_dir, ..c.clone() };
    hex::encode(Sha256::digest(canonical.to_toml_string().as_bytes()))
}

pub fn manifest_line(command: Command, c: &RunConfig, table: &CsvTable) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "artifact={}.csv command={} rows={} config_sha256={} seed={} version={}",
        command.name(),
        command.name(),
        table.rows.len(),
        config_hash(c),
        c.seed,
        env!("CARGO_PKG_VERSION")
    );
    s
}

pub fn execute(command: Command, c: &RunConfig) -> Result<CsvTable, CliError> {
    match command {
        Command::Field => Ok(cmd_field(c)),
        Command::Drift => Ok(cmd_drift(c)),
        Command::Impulse => cmd_impulse(c),
        Command::SignalSweep => cmd_signal_sweep(c),
        Command::Ser => cmd_ser(c),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Run one command and write its CSV and manifest. Returns the manifest line.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let c = resolve_config(&cli.overrides)?;
    let table = execute(cli.command, &c)?;
    let dir = &c.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    let name = cli.command.name();
    write_file(&dir.join(format!("{name}.csv")), &table.to_csv())?;
    let manifest = manifest_line(cli.command, &c, &table);
    write_file(&dir.join(format!("{name}.manifest.txt")), &format!("{manifest}\n"))?;
    Ok(manifest)
}
