//! SDMA across RF chains with NOMA inside each chain.
//!
//! Mode 1 treats every chain as an independent NOMA group and measures the
//! leakage between chains. Mode 2 lets all chains serve all users through a
//! digital precoder (identity or zero-forcing) on top of the analog beams;
//! it is an evaluation baseline, not an optimised scheme.

use std::collections::HashSet;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::array::{response_at, Awv, ChannelState};
use crate::error::{invalid, Error, Result};
use crate::rate::{mui_rates, noma_rates, ChainGroup, NomaGroup, NomaMember, RateReport};

/// Ratio of smallest to largest singular value below which zero-forcing
/// refuses the effective channel.
pub const ZF_CONDITION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RfChainPlan {
    pub chain_id: u32,
    pub awv: Awv,
    /// `(user_id, power)` of the NOMA group on this chain.
    pub members: Vec<(u32, f64)>,
    pub chain_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precoder {
    Identity,
    ZeroForcing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    chains: Vec<RfChainPlan>,
    max_users_per_chain: usize,
    precoder: Precoder,
}

impl HybridConfig {
    /// Checks chain consistency and the `M * K_max` user bound.
    pub fn new(chains: Vec<RfChainPlan>, max_users_per_chain: usize, precoder: Precoder) -> Result<Self> {
        let Some(first) = chains.first() else {
            return invalid("hybrid configuration needs at least one RF chain");
        };
        let n = first.awv.len();
        let mut ids = HashSet::new();
        let mut users = HashSet::new();
        for c in &chains {
            if !ids.insert(c.chain_id) {
                return invalid(format!("chain id {} used twice", c.chain_id));
            }
            if c.awv.len() != n {
                return invalid(format!("chain {} has {} weights, expected {n}", c.chain_id, c.awv.len()));
            }
            if c.members.is_empty() {
                return invalid(format!("chain {} serves no users", c.chain_id));
            }
            if c.members.len() > max_users_per_chain {
                return invalid(format!(
                    "chain {} serves {} users, more than {max_users_per_chain}",
                    c.chain_id,
                    c.members.len()
                ));
            }
            for &(uid, _) in &c.members {
                if !users.insert(uid) {
                    return Err(Error::DuplicateUser(uid));
                }
            }
        }
        let total = users.len();
        if total > chains.len() * max_users_per_chain {
            return invalid(format!("{total} users exceed {} chains x {max_users_per_chain} users", chains.len()));
        }
        Ok(Self { chains, max_users_per_chain, precoder })
    }

    pub fn chains(&self) -> &[RfChainPlan] {
        &self.chains
    }

    pub fn precoder(&self) -> Precoder {
        self.precoder
    }

    pub fn max_users_per_chain(&self) -> usize {
        self.max_users_per_chain
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridRow {
    pub chain_id: u32,
    pub user_id: u32,
    pub rate: f64,
    /// Interference from the other chains' streams.
    pub mui_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridReport {
    pub rates: RateReport,
    /// One row per user in chain order.
    pub rows: Vec<HybridRow>,
}

fn rows_for(cfg: &HybridConfig, rates: &RateReport, interference: &[(u32, f64)]) -> Vec<HybridRow> {
    cfg.chains
        .iter()
        .flat_map(|c| {
            c.members.iter().map(move |&(uid, _)| HybridRow {
                chain_id: c.chain_id,
                user_id: uid,
                rate: rates.rate_of(uid).unwrap_or(0.0),
                mui_power: interference.iter().find(|i| i.0 == uid).map_or(0.0, |i| i.1),
            })
        })
        .collect()
}

/// Independent NOMA per chain through [`mui_rates`]; the precoder setting
/// is ignored.
pub fn mode1_evaluate(
    cfg: &HybridConfig,
    channels: &[ChannelState],
    noise: f64,
    ignore_mui: bool,
) -> Result<HybridReport> {
    let groups: Vec<ChainGroup> = cfg
        .chains
        .iter()
        .map(|c| ChainGroup { awv: c.awv.clone(), chain_power: c.chain_power, members: c.members.clone() })
        .collect();
    let report = mui_rates(&groups, channels, noise, ignore_mui)?;
    let rows = rows_for(cfg, &report.rates, &report.interference);
    Ok(HybridReport { rates: report.rates, rows })
}

fn channel(channels: &[ChannelState], uid: u32) -> Result<&ChannelState> {
    channels.iter().find(|c| c.user_id == uid).ok_or(Error::UnknownUser(uid))
}

/// `H[u, m] = g_u * w_m^H a(phi_u)` over all users (chain order) and chains.
pub fn effective_channel(cfg: &HybridConfig, channels: &[ChannelState]) -> Result<(Vec<u32>, DMatrix<Complex64>)> {
    let users: Vec<u32> = cfg.chains.iter().flat_map(|c| c.members.iter().map(|m| m.0)).collect();
    let mut h = DMatrix::zeros(users.len(), cfg.chains.len());
    for (row, &uid) in users.iter().enumerate() {
        let ch = channel(channels, uid)?;
        for (col, c) in cfg.chains.iter().enumerate() {
            h[(row, col)] = ch.gain * response_at(c.awv.weights(), ch.direction.phi());
        }
    }
    Ok((users, h))
}

/// Digital precoder `F` (chains x streams), columns scaled so that each
/// stream radiates unit power through the analog weights.
pub fn digital_precoder(cfg: &HybridConfig, channels: &[ChannelState]) -> Result<DMatrix<Complex64>> {
    let m = cfg.chains.len();
    let raw = match cfg.precoder {
        Precoder::Identity => DMatrix::identity(m, m),
        Precoder::ZeroForcing => {
            let (_, h) = effective_channel(cfg, channels)?;
            // representative: strongest member of each chain on its own beam
            let mut reps = DMatrix::zeros(m, m);
            let mut offset = 0;
            for (col, c) in cfg.chains.iter().enumerate() {
                let rows = offset..offset + c.members.len();
                let best = rows
                    .clone()
                    .max_by(|&a, &b| h[(a, col)].norm_sqr().total_cmp(&h[(b, col)].norm_sqr()).then(b.cmp(&a)))
                    .expect("chains are nonempty");
                reps.set_row(col, &h.row(best));
                offset = rows.end;
            }
            let sv = reps.clone().singular_values();
            let hi = sv.max();
            let lo = sv.min();
            if !(hi > 0.0) || lo / hi < ZF_CONDITION_FLOOR {
                return Err(Error::Degenerate(format!(
                    "effective channel of representative users is rank deficient (condition {:.3e})",
                    if hi > 0.0 { lo / hi } else { 0.0 }
                )));
            }
            reps.try_inverse().ok_or_else(|| Error::Degenerate("effective channel is not invertible".into()))?
        }
    };
    let analog = analog_matrix(cfg);
    let mut f = raw;
    for mut col in f.column_iter_mut() {
        let radiated = (&analog * &col).norm();
        if radiated > 0.0 {
            col /= Complex64::from(radiated);
        }
    }
    Ok(f)
}

fn analog_matrix(cfg: &HybridConfig) -> DMatrix<Complex64> {
    let n = cfg.chains[0].awv.len();
    DMatrix::from_fn(n, cfg.chains.len(), |i, m| cfg.chains[m].awv.weights()[i])
}

/// `sum_m P_m ||W f_m||^2`, the power leaving the array.
pub fn radiated_power(cfg: &HybridConfig, precoder: &DMatrix<Complex64>) -> f64 {
    let analog = analog_matrix(cfg);
    cfg.chains.iter().zip(precoder.column_iter()).map(|(c, f)| c.chain_power * (&analog * f).norm_squared()).sum()
}

/// All chains serve all users: stream `m` carries chain `m`'s NOMA
/// superposition, user `u` of chain `m` sees the stream through
/// `c_{u,m} = (H F)[u, m]` and the other streams as interference.
pub fn mode2_evaluate(cfg: &HybridConfig, channels: &[ChannelState], noise: f64) -> Result<HybridReport> {
    if !(noise > 0.0 && noise.is_finite()) {
        return invalid(format!("noise power {noise} must be positive"));
    }
    let (_, h) = effective_channel(cfg, channels)?;
    let f = digital_precoder(cfg, channels)?;
    let c = &h * &f;
    let mut reports = Vec::with_capacity(cfg.chains.len());
    let mut interference = Vec::new();
    let mut row = 0;
    for (m, chain) in cfg.chains.iter().enumerate() {
        let mut members = Vec::with_capacity(chain.members.len());
        for &(uid, power) in &chain.members {
            let mui: f64 = cfg
                .chains
                .iter()
                .enumerate()
                .filter(|&(other, _)| other != m)
                .map(|(other, o)| o.chain_power * c[(row, other)].norm_sqr())
                .sum();
            interference.push((uid, mui));
            members.push(NomaMember { user_id: uid, effective_gain: c[(row, m)].norm_sqr() / (noise + mui), power });
            row += 1;
        }
        reports.push(noma_rates(&NomaGroup::new(members, chain.chain_power)?));
    }
    let rates = RateReport::concat(reports);
    let rows = rows_for(cfg, &rates, &interference);
    Ok(HybridReport { rates, rows })
}
