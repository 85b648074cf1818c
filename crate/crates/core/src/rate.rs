//! Achievable rates for downlink NOMA with perfect SIC, for the TDMA
//! baseline, and for several NOMA groups leaking into each other through
//! their analog beams.
//!
//! Within a group users are ordered by effective gain `Gamma = |g|^2 G / noise`
//! (ascending, ties broken by ascending user id). The user at position `k`
//! first decodes and cancels every weaker-ordered signal and treats the
//! stronger-ordered ones as noise:
//!
//! ```text
//! R_k = log2(1 + p_k Gamma_k / (Gamma_k * sum_{j>k} p_j + 1))
//! ```
//!
//! Rates are in bits/s/Hz.

use std::collections::HashSet;

use crate::array::{beam_gain, Awv, ChannelState};
use crate::error::{invalid, Error, Result};

const POWER_TOL: f64 = 1e-9;

/// `log2(1 + x)` without cancellation for small `x`.
#[inline]
pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Effective gain `|g|^2 * G / noise`.
#[inline]
pub fn effective_gain(channel_power: f64, beam_gain: f64, noise: f64) -> f64 {
    channel_power * beam_gain / noise
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NomaMember {
    pub user_id: u32,
    pub effective_gain: f64,
    pub power: f64,
}

/// Users superposed on one resource block.
#[derive(Debug, Clone, PartialEq)]
pub struct NomaGroup {
    members: Vec<NomaMember>,
    total_power: f64,
}

impl NomaGroup {
    pub fn new(members: Vec<NomaMember>, total_power: f64) -> Result<Self> {
        if members.is_empty() {
            return invalid("NOMA group has no members");
        }
        if !(total_power >= 0.0 && total_power.is_finite()) {
            return invalid(format!("total power {total_power} must be finite and nonnegative"));
        }
        let mut seen = HashSet::new();
        for m in &members {
            if !seen.insert(m.user_id) {
                return Err(Error::DuplicateUser(m.user_id));
            }
            if !(m.power >= 0.0 && m.power.is_finite()) {
                return invalid(format!("user {} has invalid power {}", m.user_id, m.power));
            }
            if !(m.effective_gain >= 0.0 && m.effective_gain.is_finite()) {
                return invalid(format!("user {} has invalid effective gain {}", m.user_id, m.effective_gain));
            }
        }
        let used: f64 = members.iter().map(|m| m.power).sum();
        if used > total_power * (1.0 + POWER_TOL) + f64::MIN_POSITIVE {
            return invalid(format!("allocated power {used} exceeds budget {total_power}"));
        }
        Ok(Self { members, total_power })
    }

    pub fn members(&self) -> &[NomaMember] {
        &self.members
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    /// Member indices in SIC decoding order (weakest first).
    pub fn sic_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.members.len()).collect();
        order.sort_by(|&a, &b| {
            let (ma, mb) = (&self.members[a], &self.members[b]);
            ma.effective_gain.total_cmp(&mb.effective_gain).then(ma.user_id.cmp(&mb.user_id))
        });
        order
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_user: Vec<(u32, f64)>,
    pub sum_rate: f64,
    pub min_rate: f64,
}

impl RateReport {
    pub fn from_rates(per_user: Vec<(u32, f64)>) -> Self {
        let sum_rate = per_user.iter().map(|r| r.1).sum();
        let min_rate = per_user.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let min_rate = if per_user.is_empty() { 0.0 } else { min_rate };
        Self { per_user, sum_rate, min_rate }
    }

    pub fn rate_of(&self, user_id: u32) -> Option<f64> {
        self.per_user.iter().find(|r| r.0 == user_id).map(|r| r.1)
    }

    /// Concatenates reports in order.
    pub fn concat(reports: impl IntoIterator<Item = RateReport>) -> Self {
        Self::from_rates(reports.into_iter().flat_map(|r| r.per_user).collect())
    }
}

/// Per-user NOMA rates under perfect SIC, reported in member order.
pub fn noma_rates(group: &NomaGroup) -> RateReport {
    let order = group.sic_order();
    let mut rates = vec![0.0; group.members.len()];
    // power of the users decoded after position k (stronger-ordered)
    let mut above = 0.0;
    for &idx in order.iter().rev() {
        let m = &group.members[idx];
        let sinr = m.power * m.effective_gain / (m.effective_gain * above + 1.0);
        rates[idx] = log2_1p(sinr);
        above += m.power;
    }
    RateReport::from_rates(group.members.iter().map(|m| m.user_id).zip(rates).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdmaUser {
    pub user_id: u32,
    /// Effective gain with a dedicated steered beam, `|g|^2 N / noise`.
    pub full_gain: f64,
    pub time_share: f64,
}

/// `R_i = tau_i * log2(1 + P * Gamma_i)`.
pub fn tdma_rates(users: &[TdmaUser], total_power: f64) -> Result<RateReport> {
    if !(total_power >= 0.0 && total_power.is_finite()) {
        return invalid(format!("total power {total_power} must be finite and nonnegative"));
    }
    let mut total_time = 0.0;
    for u in users {
        if !(u.time_share >= 0.0 && u.time_share.is_finite()) {
            return invalid(format!("user {} has invalid time share {}", u.user_id, u.time_share));
        }
        if !(u.full_gain >= 0.0 && u.full_gain.is_finite()) {
            return invalid(format!("user {} has invalid gain {}", u.user_id, u.full_gain));
        }
        total_time += u.time_share;
    }
    if total_time > 1.0 + 1e-12 {
        return invalid(format!("time shares sum to {total_time} > 1"));
    }
    Ok(RateReport::from_rates(
        users.iter().map(|u| (u.user_id, u.time_share * log2_1p(total_power * u.full_gain))).collect(),
    ))
}

/// One analog beam (RF chain) carrying a NOMA group.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGroup {
    pub awv: Awv,
    pub chain_power: f64,
    /// `(user_id, power)`; powers sum to at most `chain_power`.
    pub members: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuiReport {
    pub rates: RateReport,
    /// Interference power `(user_id, I_u)` leaked from the other chains,
    /// measured even when it is ignored in the rates.
    pub interference: Vec<(u32, f64)>,
}

/// NOMA rates when each group's users also receive the other groups' beams.
///
/// User `u` in group `m` sees `I_u = sum_{m' != m} P_{m'} |g_u|^2 G_{m'}(phi_u)`
/// on top of the noise; with `ignore_mui` the interference is dropped.
pub fn mui_rates(groups: &[ChainGroup], channels: &[ChannelState], noise: f64, ignore_mui: bool) -> Result<MuiReport> {
    if !(noise > 0.0 && noise.is_finite()) {
        return invalid(format!("noise power {noise} must be positive"));
    }
    let mut seen = HashSet::new();
    for g in groups {
        for &(uid, _) in &g.members {
            if !seen.insert(uid) {
                return Err(Error::DuplicateUser(uid));
            }
        }
    }
    let channel_of = |uid: u32| channels.iter().find(|c| c.user_id == uid).ok_or(Error::UnknownUser(uid));

    let mut reports = Vec::with_capacity(groups.len());
    let mut interference = Vec::new();
    for (m, group) in groups.iter().enumerate() {
        let mut members = Vec::with_capacity(group.members.len());
        for &(uid, power) in &group.members {
            let ch = channel_of(uid)?;
            let mui: f64 = groups
                .iter()
                .enumerate()
                .filter(|&(other, _)| other != m)
                .map(|(_, o)| o.chain_power * ch.power() * beam_gain(&o.awv, ch.direction))
                .sum();
            interference.push((uid, mui));
            let floor = if ignore_mui { noise } else { noise + mui };
            members.push(NomaMember {
                user_id: uid,
                effective_gain: effective_gain(ch.power(), beam_gain(&group.awv, ch.direction), floor),
                power,
            });
        }
        reports.push(noma_rates(&NomaGroup::new(members, group.chain_power)?));
    }
    Ok(MuiReport { rates: RateReport::concat(reports), interference })
}
