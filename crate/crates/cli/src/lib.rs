//! Scenario configuration and the named experiments behind `mmnoma`.
//!
//! Every experiment renders CSV text first and writes it afterwards, so the
//! same inputs always produce the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use mmwave_noma::allocation::fixed_split;
use mmwave_noma::array::{pattern, sample_channel, ArrayGeometry, ChannelState, Direction, FadingMode, UserSpec};
use mmwave_noma::beam_model::{ideal_gain, required_width};
use mmwave_noma::design::{
    cm_optimize_multibeam, steer_single, subarray_multibeam, wide_beam, BeamTarget, CmOptions, DesignResult,
};
use mmwave_noma::hybrid::{mode1_evaluate, mode2_evaluate, HybridConfig, Precoder, RfChainPlan};
use mmwave_noma::pairing::{
    angle_merge, exhaustive_pairing, strong_weak_heuristic, BeamForming, BeamModel, PairingInstance, PowerPolicy,
};
use mmwave_noma::rate::{effective_gain, noma_rates, tdma_rates, NomaGroup, NomaMember, TdmaUser};
use mmwave_noma::report::{fmt_num, hybrid_rows, pairing_rows, HYBRID_HEADER, PAIRING_HEADER};
use mmwave_noma::Error as ModelError;

pub const SWEEP_SNR_HEADER: &str = "snr_db,B_over_2N,noma_sum_rate,tdma_sum_rate";
pub const SWEEP_BETA_HEADER: &str = "beta,noma_sum_rate,tdma_sum_rate";
pub const SWEEP_GAIN_HEADER: &str = "g2,noma_sum_rate";
pub const AWV_HEADER: &str = "index,phase_rad";
pub const TARGETS_HEADER: &str = "phi,target_gain,achieved_gain";
pub const PATTERN_HEADER: &str = "phi,gain_linear,gain_db";
pub const DEFAULT_GRID: usize = 1024;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Model(ModelError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(e) => match e {
                ModelError::Infeasible(_) | ModelError::Degenerate(_) => 3,
                _ => 2,
            },
            CliError::Io { .. } => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Cosine of the departure angle, checked to lie in `[-1, 1]` while parsing
/// so errors carry the line and column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DirectionCos(f64);

impl DirectionCos {
    pub fn direction(self) -> Direction {
        Direction::saturating(self.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for DirectionCos {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, String> {
        if (-1.0..=1.0).contains(&v) {
            Ok(Self(v))
        } else {
            Err(format!("direction_cos {v} outside [-1, 1]"))
        }
    }
}

impl<'de> Deserialize<'de> for DirectionCos {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        DirectionCos::try_from(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    #[default]
    Deterministic,
    Rayleigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    /// Defaults to the 1-based position in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<u32>,
    pub avg_power_db: f64,
    pub direction_cos: DirectionCos,
    #[serde(default)]
    pub fading: Fading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamFormingMode {
    #[default]
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamModelMode {
    #[default]
    Ideal,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    SnrDb,
    Beta,
    G2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Explicit values; overrides `start`/`stop`/`points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl SweepSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if let Some(v) = &self.values {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return config_err("sweep values must be a nonempty list of finite numbers");
            }
            return Ok(v.clone());
        }
        let (Some(start), Some(stop), Some(points)) = (self.start, self.stop, self.points) else {
            return config_err("sweep needs either values or start, stop and points");
        };
        if !(start.is_finite() && stop.is_finite()) || points == 0 {
            return config_err("sweep start/stop must be finite and points at least 1");
        }
        if points == 1 {
            return Ok(vec![start]);
        }
        Ok((0..points)
            .map(|i| if i == points - 1 { stop } else { start + (stop - start) * i as f64 / (points - 1) as f64 })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignerKind {
    #[default]
    CmOptimize,
    Subarray,
    Wide,
    Steer,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default)]
    pub designer: DesignerKind,
    /// One gain per user; `N / K` each when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gains: Option<Vec<f64>>,
    /// Wide-beam width in units of `2/N`; just wide enough to cover the
    /// users when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

fn default_n() -> usize {
    32
}
fn default_noise() -> f64 {
    1.0
}
fn default_split() -> [f64; 2] {
    [0.25, 0.75]
}
fn default_widths() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_snr() -> f64 {
    20.0
}
fn default_beta() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_n")]
    pub n_antennas: usize,
    #[serde(default = "default_noise")]
    pub noise_power: f64,
    pub users: Vec<UserConfig>,
    /// `(strong, weak)` power fractions.
    #[serde(default = "default_split")]
    pub power_split: [f64; 2],
    #[serde(default)]
    pub beam_forming: BeamFormingMode,
    #[serde(default)]
    pub beam_model: BeamModelMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Beam widths for the SNR sweep, in units of `2/N`.
    #[serde(default = "default_widths")]
    pub beam_widths: Vec<f64>,
    /// Transmission SNR `P / noise` in dB for fixed-SNR experiments.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Channel power ratio of user 1 to user 2 for the gain sweep.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub design: DesignConfig,
    /// User ids per RF chain for the hybrid demo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<Vec<Vec<u32>>>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_antennas == 0 {
            return config_err("n_antennas must be at least 1");
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return config_err(format!("noise_power {} must be positive", self.noise_power));
        }
        if self.users.is_empty() {
            return config_err("users must not be empty");
        }
        for (i, u) in self.users.iter().enumerate() {
            if !u.avg_power_db.is_finite() {
                return config_err(format!("users[{i}].avg_power_db must be finite"));
            }
        }
        let ids = self.user_ids();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return config_err(format!("user id {id} appears twice"));
            }
        }
        let [s, w] = self.power_split;
        if !(s >= 0.0 && w >= 0.0 && ((s + w) - 1.0).abs() <= 1e-9) {
            return config_err(format!("power_split {:?} must be nonnegative and sum to 1", self.power_split));
        }
        let max_width = self.n_antennas as f64;
        if self.beam_widths.is_empty() || self.beam_widths.iter().any(|b| !(*b > 0.0 && *b <= max_width)) {
            return config_err(format!("beam_widths must lie in (0, {max_width}] (units of 2/N)"));
        }
        if !self.snr_db.is_finite() {
            return config_err("snr_db must be finite");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return config_err(format!("beta {} must be positive", self.beta));
        }
        if let Some(sweep) = &self.sweep {
            sweep.values()?;
        }
        if let Some(g) = &self.design.target_gains {
            if g.len() != self.users.len() || g.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return config_err("design.target_gains needs one nonnegative gain per user");
            }
        }
        if let Some(w) = self.design.width {
            if !(w >= 1.0 && w <= max_width) {
                return config_err(format!("design.width {w} must lie in [1, {max_width}] (units of 2/N)"));
            }
        }
        if let Some(chains) = &self.chains {
            let mut seen = Vec::new();
            for c in chains {
                if c.is_empty() {
                    return config_err("every chain needs at least one user");
                }
                for id in c {
                    if !ids.contains(id) {
                        return config_err(format!("chain refers to unknown user {id}"));
                    }
                    if seen.contains(id) {
                        return config_err(format!("user {id} assigned to two chains"));
                    }
                    seen.push(*id);
                }
            }
        }
        Ok(())
    }

    pub fn user_ids(&self) -> Vec<u32> {
        self.users.iter().enumerate().map(|(i, u)| u.user_id.unwrap_or(i as u32 + 1)).collect()
    }

    pub fn geometry(&self) -> Result<ArrayGeometry, CliError> {
        Ok(ArrayGeometry::new(self.n_antennas)?)
    }

    /// Transmit power at the configured SNR.
    pub fn transmit_power(&self) -> f64 {
        self.noise_power * db_to_linear(self.snr_db)
    }

    /// Channel realisations for every user, drawn with `seed`.
    pub fn channels(&self, seed: u64) -> Result<Vec<ChannelState>, CliError> {
        self.users
            .iter()
            .zip(self.user_ids())
            .map(|(u, id)| {
                let spec = UserSpec {
                    user_id: id,
                    direction: u.direction_cos.direction(),
                    avg_power: db_to_linear(u.avg_power_db),
                    fading: match u.fading {
                        Fading::Deterministic => FadingMode::Deterministic,
                        Fading::Rayleigh => FadingMode::Rayleigh,
                    },
                };
                Ok(sample_channel(&spec, seed)?)
            })
            .collect()
    }

    fn swept(&self, variable: SweepVariable, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
        match &self.sweep {
            None => Ok(default),
            Some(s) if s.variable == variable => s.values(),
            Some(s) => {
                config_err(format!("sweep variable {:?} does not apply here (expected {variable:?})", s.variable))
            }
        }
    }

    fn require_two_users(&self, what: &str) -> Result<(), CliError> {
        if self.users.len() != 2 {
            return config_err(format!("{what} needs exactly two users, got {}", self.users.len()));
        }
        Ok(())
    }

    fn user(avg_power_db: f64, phi: f64) -> UserConfig {
        UserConfig { user_id: None, avg_power_db, direction_cos: DirectionCos(phi), fading: Fading::Deterministic }
    }

    fn with_users(users: Vec<UserConfig>) -> Self {
        Self {
            n_antennas: default_n(),
            noise_power: default_noise(),
            users,
            power_split: default_split(),
            beam_forming: BeamFormingMode::default(),
            beam_model: BeamModelMode::default(),
            sweep: None,
            beam_widths: default_widths(),
            snr_db: default_snr(),
            beta: default_beta(),
            seed: 0,
            design: DesignConfig::default(),
            chains: None,
        }
    }

    /// Built-in scenario used when no config file is given.
    pub fn preset(command: Command) -> Self {
        match command {
            // user 1 is 6 dB stronger
            Command::SweepSnr | Command::SweepBeta | Command::SweepGain => {
                Self::with_users(vec![Self::user(0.0, 0.1), Self::user(-6.0, -0.1)])
            }
            // users 3 and 4 strong near broadside and at user 1; users 1, 2 weak
            Command::PairingDemo => Self::with_users(vec![
                Self::user(-6.0, 0.35),
                Self::user(-6.0, -0.6),
                Self::user(0.0, 0.05),
                Self::user(0.0, 0.37),
            ]),
            Command::HybridDemo => {
                let mut c = Self::with_users(vec![
                    Self::user(-6.0, 0.35),
                    Self::user(-6.0, -0.6),
                    Self::user(0.0, 0.05),
                    Self::user(0.0, -0.2),
                ]);
                c.beam_forming = BeamFormingMode::Multi;
                c.chains = Some(vec![vec![4, 1], vec![2, 3]]);
                c
            }
            Command::DesignBeam => {
                let mut c = Self::with_users(vec![Self::user(0.0, -0.5), Self::user(0.0, 0.5)]);
                c.beam_forming = BeamFormingMode::Multi;
                c
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn to_json(cfg: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serialises")
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Two users ordered `(strong, weak)` by average power, user 1 first on ties.
fn two_user_powers(cfg: &ScenarioConfig) -> (f64, f64) {
    let a = db_to_linear(cfg.users[0].avg_power_db);
    let b = db_to_linear(cfg.users[1].avg_power_db);
    if b > a {
        (b, a)
    } else {
        (a, b)
    }
}

/// NOMA sum rate of two users with fixed `(strong, weak)` power fractions.
fn noma_pair_sum(cfg: &ScenarioConfig, p: f64, channel: [f64; 2], gains: [f64; 2]) -> Result<f64, CliError> {
    let eff =
        [effective_gain(channel[0], gains[0], cfg.noise_power), effective_gain(channel[1], gains[1], cfg.noise_power)];
    let strong = if eff[1] > eff[0] { 1 } else { 0 };
    let powers = fixed_split(p, &cfg.power_split)?;
    let mut member_powers = [0.0; 2];
    member_powers[strong] = powers[0];
    member_powers[1 - strong] = powers[1];
    let members =
        (0..2).map(|i| NomaMember { user_id: i as u32 + 1, effective_gain: eff[i], power: member_powers[i] }).collect();
    Ok(noma_rates(&NomaGroup::new(members, p)?).sum_rate)
}

fn tdma_pair_sum(cfg: &ScenarioConfig, p: f64, channel: [f64; 2]) -> Result<f64, CliError> {
    let n = cfg.n_antennas as f64;
    let users: Vec<TdmaUser> = (0..2)
        .map(|i| TdmaUser {
            user_id: i as u32 + 1,
            full_gain: effective_gain(channel[i], n, cfg.noise_power),
            time_share: 0.5,
        })
        .collect();
    Ok(tdma_rates(&users, p)?.sum_rate)
}

/// Single-beam NOMA at ideal gain `2/B` for each width against TDMA with
/// full-gain beams, over the SNR grid (0 to 30 dB in 2 dB steps by default).
pub fn sweep_snr(cfg: &ScenarioConfig) -> Result<String, CliError> {
    cfg.require_two_users("sweep-snr")?;
    let snrs = cfg.swept(SweepVariable::SnrDb, (0..=15).map(|i| 2.0 * i as f64).collect())?;
    let (strong, weak) = two_user_powers(cfg);
    let n = cfg.n_antennas as f64;
    let mut out = format!("{SWEEP_SNR_HEADER}\n");
    for &snr in &snrs {
        let p = cfg.noise_power * db_to_linear(snr);
        for &units in &cfg.beam_widths {
            let g = ideal_gain(units * 2.0 / n)?;
            let noma = noma_pair_sum(cfg, p, [strong, weak], [g, g])?;
            let tdma = tdma_pair_sum(cfg, p, [strong, weak])?;
            let _ = writeln!(out, "{},{},{},{}", fmt_num(snr), fmt_num(units), fmt_num(noma), fmt_num(tdma));
        }
    }
    Ok(out)
}

/// Channel powers `(user 1, user 2)` with ratio `beta` and the configured
/// total.
fn normalised_pair(cfg: &ScenarioConfig, beta: f64) -> [f64; 2] {
    let total = db_to_linear(cfg.users[0].avg_power_db) + db_to_linear(cfg.users[1].avg_power_db);
    [total * beta / (1.0 + beta), total / (1.0 + beta)]
}

/// Multi-beam NOMA with `G1 = G2 = N/2` against TDMA at a fixed total
/// channel power, over `beta` (1, 2, 4, 8 by default).
pub fn sweep_beta(cfg: &ScenarioConfig) -> Result<String, CliError> {
    cfg.require_two_users("sweep-beta")?;
    let betas = cfg.swept(SweepVariable::Beta, vec![1.0, 2.0, 4.0, 8.0])?;
    if betas.iter().any(|b| !(*b > 0.0)) {
        return config_err("beta values must be positive");
    }
    let p = cfg.transmit_power();
    let half = cfg.n_antennas as f64 / 2.0;
    let mut out = format!("{SWEEP_BETA_HEADER}\n");
    for &beta in &betas {
        let ch = normalised_pair(cfg, beta);
        let noma = noma_pair_sum(cfg, p, ch, [half, half])?;
        let tdma = tdma_pair_sum(cfg, p, ch)?;
        let _ = writeln!(out, "{},{},{}", fmt_num(beta), fmt_num(noma), fmt_num(tdma));
    }
    Ok(out)
}

/// Multi-beam NOMA along `G1 + G2 = N` at the configured `beta`
/// (`G2 = N/2, 3N/8, N/4, N/8, N/16` by default).
pub fn sweep_gain(cfg: &ScenarioConfig) -> Result<String, CliError> {
    cfg.require_two_users("sweep-gain")?;
    let n = cfg.n_antennas as f64;
    let g2s = cfg.swept(SweepVariable::G2, [0.5, 0.375, 0.25, 0.125, 0.0625].iter().map(|f| f * n).collect())?;
    if g2s.iter().any(|g| !(0.0..=n).contains(g)) {
        return config_err(format!("g2 values must lie in [0, {n}]"));
    }
    let p = cfg.transmit_power();
    let ch = normalised_pair(cfg, cfg.beta);
    let mut out = format!("{SWEEP_GAIN_HEADER}\n");
    for &g2 in &g2s {
        let noma = noma_pair_sum(cfg, p, ch, [n - g2, g2])?;
        let _ = writeln!(out, "{},{}", fmt_num(g2), fmt_num(noma));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Demos
// ---------------------------------------------------------------------------

pub fn pairing_instance(cfg: &ScenarioConfig, seed: u64) -> Result<PairingInstance, CliError> {
    Ok(PairingInstance {
        users: cfg.channels(seed)?,
        geom: cfg.geometry()?,
        beam_forming: match cfg.beam_forming {
            BeamFormingMode::Single => BeamForming::Single,
            BeamFormingMode::Multi => BeamForming::Multi,
        },
        beam_model: match cfg.beam_model {
            BeamModelMode::Ideal => BeamModel::Ideal,
            BeamModelMode::Physical => BeamModel::Physical,
        },
        group_power: cfg.transmit_power(),
        noise: cfg.noise_power,
        power_policy: PowerPolicy::FixedSplit { strong_fraction: cfg.power_split[0] },
    })
}

/// Plans 0, 1, 2: exhaustive, strong-weak heuristic, exhaustive after
/// angle merging.
pub fn pairing_demo(cfg: &ScenarioConfig, seed: u64) -> Result<String, CliError> {
    let inst = pairing_instance(cfg, seed)?;
    let best = exhaustive_pairing(&inst)?;
    let heuristic = strong_weak_heuristic(&inst)?;
    let merged = angle_merge(&inst, &best)?;
    let mut out = format!("{PAIRING_HEADER}\n");
    for (id, plan) in [&best, &heuristic, &merged].into_iter().enumerate() {
        out.push_str(&pairing_rows(id, plan));
    }
    Ok(out)
}

/// Analog beam for users `ids`: a steered beam for one user, otherwise
/// the configured multi-beam designer with gains `N/K`.
fn chain_beam(
    cfg: &ScenarioConfig,
    channels: &[ChannelState],
    ids: &[u32],
    seed: u64,
) -> Result<DesignResult, CliError> {
    let geom = cfg.geometry()?;
    let dirs: Vec<Direction> = ids
        .iter()
        .map(|id| channels.iter().find(|c| c.user_id == *id).map(|c| c.direction))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Config(format!("chain users {ids:?} not all configured")))?;
    let gain = cfg.n_antennas as f64 / ids.len() as f64;
    let targets: Vec<BeamTarget> = dirs.iter().map(|&d| BeamTarget::new(d, gain)).collect();
    if ids.len() == 1 {
        let awv = steer_single(geom, dirs[0]);
        let achieved = vec![mmwave_noma::array::beam_gain(&awv, dirs[0])];
        return Ok(DesignResult {
            awv,
            targets,
            achieved_gains: achieved,
            alpha: 1.0 / (cfg.n_antennas as f64).sqrt(),
            alpha_trace: vec![],
            iterations: 1,
            shortfall: false,
        });
    }
    Ok(match cfg.design.designer {
        DesignerKind::Subarray => subarray_multibeam(geom, &targets, None)?,
        _ => cm_optimize_multibeam(geom, &targets, &CmOptions { restart_seed: seed, ..CmOptions::default() })?,
    })
}

/// RF chains of the hybrid demo: one group per configured chain (or per
/// strong-weak pair), equal power per chain and the fixed split inside.
pub fn hybrid_chains(cfg: &ScenarioConfig, channels: &[ChannelState], seed: u64) -> Result<Vec<RfChainPlan>, CliError> {
    let groups: Vec<Vec<u32>> = match &cfg.chains {
        Some(c) => c.clone(),
        None => {
            let inst = pairing_instance(cfg, seed)?;
            strong_weak_heuristic(&inst)?.groups.into_iter().map(|g| g.user_ids).collect()
        }
    };
    let chain_power = cfg.transmit_power() / groups.len() as f64;
    let mut plans = Vec::with_capacity(groups.len());
    for (idx, ids) in groups.iter().enumerate() {
        let design = chain_beam(cfg, channels, ids, seed)?;
        let members = if ids.len() == 1 {
            vec![(ids[0], chain_power)]
        } else if ids.len() == 2 {
            let eff: Vec<f64> = ids
                .iter()
                .zip(&design.achieved_gains)
                .map(|(id, g)| {
                    let ch = channels.iter().find(|c| c.user_id == *id).expect("checked above");
                    effective_gain(ch.power(), *g, cfg.noise_power)
                })
                .collect();
            let strong = if eff[1] >= eff[0] { 1 } else { 0 };
            let split = fixed_split(chain_power, &cfg.power_split)?;
            let mut m = vec![(ids[0], 0.0), (ids[1], 0.0)];
            m[strong].1 = split[0];
            m[1 - strong].1 = split[1];
            m
        } else {
            return config_err(format!("chain {ids:?} must hold one or two users"));
        };
        plans.push(RfChainPlan { chain_id: idx as u32 + 1, awv: design.awv, members, chain_power });
    }
    Ok(plans)
}

pub struct HybridOutput {
    pub mode1: String,
    pub mode2_identity: String,
    /// `None` when zero-forcing is degenerate for this scenario.
    pub mode2_zf: Option<String>,
}

pub fn hybrid_demo(cfg: &ScenarioConfig, seed: u64, ignore_mui: bool) -> Result<HybridOutput, CliError> {
    let channels = cfg.channels(seed)?;
    let chains = hybrid_chains(cfg, &channels, seed)?;
    let k_max = chains.iter().map(|c| c.members.len()).max().unwrap_or(1);
    let ident = HybridConfig::new(chains.clone(), k_max, Precoder::Identity)?;
    let m1 = mode1_evaluate(&ident, &channels, cfg.noise_power, ignore_mui)?;
    let mode1 = format!("{HYBRID_HEADER}\n{}", hybrid_rows(if ignore_mui { "1-ignore-mui" } else { "1" }, &m1));
    let m2 = mode2_evaluate(&ident, &channels, cfg.noise_power)?;
    let mode2_identity = format!("{HYBRID_HEADER}\n{}", hybrid_rows("2-identity", &m2));
    let zf = HybridConfig::new(chains, k_max, Precoder::ZeroForcing)?;
    let mode2_zf = match mode2_evaluate(&zf, &channels, cfg.noise_power) {
        Ok(r) => Some(format!("{HYBRID_HEADER}\n{}", hybrid_rows("2-zf", &r))),
        Err(ModelError::Degenerate(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(HybridOutput { mode1, mode2_identity, mode2_zf })
}

pub struct DesignOutput {
    pub awv: String,
    pub targets: String,
    pub pattern: String,
}

pub fn design_beam(cfg: &ScenarioConfig, seed: u64, grid: usize) -> Result<DesignOutput, CliError> {
    let geom = cfg.geometry()?;
    let n = cfg.n_antennas as f64;
    let dirs: Vec<Direction> = cfg.users.iter().map(|u| u.direction_cos.direction()).collect();
    let gains = cfg.design.target_gains.clone().unwrap_or_else(|| vec![n / dirs.len() as f64; dirs.len()]);
    let targets: Vec<BeamTarget> = dirs.iter().zip(&gains).map(|(&d, &g)| BeamTarget::new(d, g)).collect();
    let awv = match cfg.design.designer {
        DesignerKind::CmOptimize => {
            cm_optimize_multibeam(geom, &targets, &CmOptions { restart_seed: seed, ..CmOptions::default() })?.awv
        }
        DesignerKind::Subarray => subarray_multibeam(geom, &targets, None)?.awv,
        DesignerKind::Steer => steer_single(geom, dirs[0]),
        DesignerKind::Wide => {
            let width = match cfg.design.width {
                Some(units) => units * 2.0 / n,
                None => required_width(&dirs, geom)?.min(2.0),
            };
            let lo = dirs.iter().map(|d| d.phi()).fold(f64::INFINITY, f64::min);
            let hi = dirs.iter().map(|d| d.phi()).fold(f64::NEG_INFINITY, f64::max);
            wide_beam(geom, Direction::saturating(0.5 * (lo + hi)), width)?
        }
    };
    let mut awv_csv = format!("{AWV_HEADER}\n");
    for (i, p) in awv.phases().iter().enumerate() {
        let _ = writeln!(awv_csv, "{i},{}", fmt_num(*p));
    }
    let mut targets_csv = format!("{TARGETS_HEADER}\n");
    for t in &targets {
        let g = mmwave_noma::array::beam_gain(&awv, t.direction);
        let _ = writeln!(targets_csv, "{},{},{}", fmt_num(t.direction.phi()), fmt_num(t.target_gain), fmt_num(g));
    }
    let mut pattern_csv = format!("{PATTERN_HEADER}\n");
    for (phi, g) in pattern(&awv, grid)? {
        let db = 10.0 * g.max(1e-30).log10();
        let _ = writeln!(pattern_csv, "{},{},{}", fmt_num(phi), fmt_num(g), fmt_num(db));
    }
    Ok(DesignOutput { awv: awv_csv, targets: targets_csv, pattern: pattern_csv })
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SweepSnr,
    SweepBeta,
    SweepGain,
    PairingDemo,
    HybridDemo,
    DesignBeam,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::SweepSnr,
        Command::SweepBeta,
        Command::SweepGain,
        Command::PairingDemo,
        Command::HybridDemo,
        Command::DesignBeam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SweepSnr => "sweep-snr",
            Command::SweepBeta => "sweep-beta",
            Command::SweepGain => "sweep-gain",
            Command::PairingDemo => "pairing-demo",
            Command::HybridDemo => "hybrid-demo",
            Command::DesignBeam => "design-beam",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
            format!("unknown command `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Overrides the config seed.
    pub seed: Option<u64>,
    pub ignore_mui: bool,
    /// Pattern grid size; [`DEFAULT_GRID`] when absent.
    pub grid: Option<usize>,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Runs `command` and writes its CSV files into `out_dir`, returning the
/// paths written.
pub fn run_named(
    command: Command,
    cfg: &ScenarioConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let grid = opts.grid.unwrap_or(DEFAULT_GRID);
    if grid < 2 {
        return config_err("--grid must be at least 2");
    }
    // compute before touching the filesystem so failures leave nothing behind
    let files: Vec<(&str, String)> = match command {
        Command::SweepSnr => vec![("sweep_snr.csv", sweep_snr(cfg)?)],
        Command::SweepBeta => vec![("sweep_beta.csv", sweep_beta(cfg)?)],
        Command::SweepGain => vec![("sweep_gain.csv", sweep_gain(cfg)?)],
        Command::PairingDemo => vec![("pairing.csv", pairing_demo(cfg, seed)?)],
        Command::HybridDemo => {
            let out = hybrid_demo(cfg, seed, opts.ignore_mui)?;
            let mut files = vec![("hybrid_mode1.csv", out.mode1), ("hybrid_mode2_identity.csv", out.mode2_identity)];
            if let Some(zf) = out.mode2_zf {
                files.push(("hybrid_mode2_zf.csv", zf));
            }
            files
        }
        Command::DesignBeam => {
            let out = design_beam(cfg, seed, grid)?;
            vec![("design_awv.csv", out.awv), ("design_targets.csv", out.targets), ("pattern.csv", out.pattern)]
        }
    };
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
    files.iter().map(|(name, text)| write_file(out_dir, name, text)).collect()
}
