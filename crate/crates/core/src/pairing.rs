//! Splitting users into NOMA pairs served on orthogonal resources.
//!
//! Each group (a pair, or one singleton when the user count is odd) gets an
//! equal time share; the plan objective is the time-weighted sum rate.

use std::collections::{HashMap, HashSet};

use crate::allocation::max_sum_rate_2user;
use crate::array::{beam_gain, ArrayGeometry, ChannelState, Direction};
use crate::beam_model::{ideal_gain, required_width};
use crate::design::{steer_single, subarray_multibeam, wide_beam, BeamTarget};
use crate::error::{invalid, Error, Result};
use crate::rate::{effective_gain, noma_rates, NomaGroup, NomaMember};

/// Largest instance the exhaustive matcher accepts.
pub const MAX_EXHAUSTIVE_USERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamForming {
    /// One beam wide enough to cover both users.
    Single,
    /// One narrow beam per user sharing the gain budget.
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamModel {
    /// Flat-top beams with gain `2/B`.
    Ideal,
    /// Gains of designed CM weight vectors.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerPolicy {
    /// The stronger user (by effective gain) gets this fraction of the power.
    FixedSplit {
        strong_fraction: f64,
    },
    MaxSumRate,
}

impl Default for PowerPolicy {
    fn default() -> Self {
        PowerPolicy::FixedSplit { strong_fraction: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingInstance {
    pub users: Vec<ChannelState>,
    pub geom: ArrayGeometry,
    pub beam_forming: BeamForming,
    pub beam_model: BeamModel,
    /// Transmit power of each group during its time share.
    pub group_power: f64,
    pub noise: f64,
    pub power_policy: PowerPolicy,
}

impl PairingInstance {
    fn validate(&self) -> Result<()> {
        if self.users.len() < 2 {
            return invalid(format!("pairing needs at least two users, got {}", self.users.len()));
        }
        let mut seen = HashSet::new();
        for u in &self.users {
            if !seen.insert(u.user_id) {
                return Err(Error::DuplicateUser(u.user_id));
            }
        }
        if !(self.group_power >= 0.0 && self.group_power.is_finite()) {
            return invalid(format!("group power {} must be finite and nonnegative", self.group_power));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return invalid(format!("noise power {} must be positive", self.noise));
        }
        if let PowerPolicy::FixedSplit { strong_fraction } = self.power_policy {
            if !(0.0..=1.0).contains(&strong_fraction) {
                return invalid(format!("strong fraction {strong_fraction} outside [0, 1]"));
            }
        }
        Ok(())
    }

    fn user(&self, user_id: u32) -> Result<&ChannelState> {
        self.users.iter().find(|u| u.user_id == user_id).ok_or(Error::UnknownUser(user_id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGroup {
    pub user_ids: Vec<u32>,
    /// Width of the covering beam, or of each beam in multi-beam mode.
    pub beam_width: f64,
    /// Beam gain toward each member, in `user_ids` order.
    pub beam_gains: Vec<f64>,
    /// Both users share one narrow beam.
    pub merged: bool,
    /// Group sum rate while it holds the channel.
    pub sum_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingPlan {
    pub groups: Vec<PairGroup>,
    pub objective: f64,
}

impl PairingPlan {
    fn from_groups(groups: Vec<PairGroup>) -> Self {
        let objective = plan_objective(groups.iter().map(|g| (g.user_ids.iter().min().copied(), g.sum_rate)));
        Self { groups, objective }
    }

    /// Every user id in the plan, in group order.
    pub fn user_ids(&self) -> Vec<u32> {
        self.groups.iter().flat_map(|g| g.user_ids.iter().copied()).collect()
    }
}

/// Mean group sum rate, summed in order of each group's lowest user id so
/// the same partition always gives the same bits.
fn plan_objective(groups: impl Iterator<Item = (Option<u32>, f64)>) -> f64 {
    let mut rates: Vec<(Option<u32>, f64)> = groups.collect();
    rates.sort_by_key(|&(id, _)| id);
    let share = 1.0 / rates.len().max(1) as f64;
    rates.iter().map(|&(_, r)| share * r).sum()
}

/// Gains toward `users` for one group, before power allocation.
fn group_beam(inst: &PairingInstance, users: &[&ChannelState], merged: bool) -> Result<(f64, Vec<f64>)> {
    let n = inst.geom.n_antennas() as f64;
    let narrow = inst.geom.min_beam_width();
    if users.len() == 1 {
        return Ok((narrow, vec![n]));
    }
    // designs depend on target order; fix it so a pair is evaluated the same either way
    if users[0].user_id > users[1].user_id {
        let (width, mut gains) = group_beam(inst, &[users[1], users[0]], merged)?;
        gains.swap(0, 1);
        return Ok((width, gains));
    }
    let dirs: Vec<Direction> = users.iter().map(|u| u.direction).collect();
    let mid = Direction::saturating(0.5 * (dirs[0].phi() + dirs[1].phi()));
    let coincident = (dirs[0].phi() - dirs[1].phi()).abs() < 1e-12;
    if merged {
        return Ok(match inst.beam_model {
            BeamModel::Ideal => (narrow, vec![n, n]),
            BeamModel::Physical => {
                let w = steer_single(inst.geom, mid);
                (narrow, dirs.iter().map(|&d| beam_gain(&w, d)).collect())
            }
        });
    }
    match (inst.beam_forming, inst.beam_model) {
        (BeamForming::Single, BeamModel::Ideal) => {
            let width = required_width(&dirs, inst.geom)?.min(2.0);
            let g = ideal_gain(width)?;
            Ok((width, vec![g, g]))
        }
        (BeamForming::Single, BeamModel::Physical) => {
            let width = required_width(&dirs, inst.geom)?.min(2.0);
            let w = wide_beam(inst.geom, mid, width)?;
            Ok((width, dirs.iter().map(|&d| beam_gain(&w, d)).collect()))
        }
        (BeamForming::Multi, BeamModel::Ideal) => Ok((narrow, vec![n / 2.0, n / 2.0])),
        (BeamForming::Multi, BeamModel::Physical) if coincident => {
            let w = steer_single(inst.geom, mid);
            Ok((narrow, dirs.iter().map(|&d| beam_gain(&w, d)).collect()))
        }
        (BeamForming::Multi, BeamModel::Physical) => {
            let targets: Vec<BeamTarget> = dirs.iter().map(|&d| BeamTarget::new(d, n / 2.0)).collect();
            let r = subarray_multibeam(inst.geom, &targets, None)?;
            Ok((narrow, r.achieved_gains))
        }
    }
}

/// Evaluates one group: beam gains, power split and sum rate.
pub fn evaluate_group(inst: &PairingInstance, user_ids: &[u32], merged: bool) -> Result<PairGroup> {
    if user_ids.is_empty() || user_ids.len() > 2 {
        return invalid(format!("groups hold one or two users, got {user_ids:?}"));
    }
    let users: Vec<&ChannelState> = user_ids.iter().map(|&id| inst.user(id)).collect::<Result<_>>()?;
    let merged = merged && users.len() == 2;
    let (beam_width, beam_gains) = group_beam(inst, &users, merged)?;
    let eff: Vec<f64> = users.iter().zip(&beam_gains).map(|(u, &g)| effective_gain(u.power(), g, inst.noise)).collect();
    let p = inst.group_power;
    let powers = if users.len() == 1 {
        vec![p]
    } else {
        // the later member is the stronger one on ties, matching SIC order
        let strong = if eff[1] >= eff[0] { 1 } else { 0 };
        let weak = 1 - strong;
        let mut powers = vec![0.0; 2];
        match inst.power_policy {
            PowerPolicy::FixedSplit { strong_fraction } => {
                powers[strong] = strong_fraction * p;
                powers[weak] = p - powers[strong];
            }
            PowerPolicy::MaxSumRate => {
                let s = max_sum_rate_2user(eff[strong], eff[weak], p, 0.0, 0.0)?;
                powers[strong] = s.p_strong;
                powers[weak] = s.p_weak;
            }
        }
        powers
    };
    let members = user_ids
        .iter()
        .zip(eff.iter().zip(&powers))
        .map(|(&id, (&g, &pw))| NomaMember { user_id: id, effective_gain: g, power: pw })
        .collect();
    let sum_rate = noma_rates(&NomaGroup::new(members, p)?).sum_rate;
    Ok(PairGroup { user_ids: user_ids.to_vec(), beam_width, beam_gains, merged, sum_rate })
}

/// Re-evaluates a plan given as `(user_ids, merged)` groups, checking that
/// the groups partition the instance's users.
pub fn evaluate_plan(inst: &PairingInstance, groups: &[(Vec<u32>, bool)]) -> Result<PairingPlan> {
    inst.validate()?;
    let mut seen = HashSet::new();
    for (ids, _) in groups {
        for &id in ids {
            inst.user(id)?;
            if !seen.insert(id) {
                return Err(Error::DuplicateUser(id));
            }
        }
    }
    if seen.len() != inst.users.len() {
        return invalid("plan groups do not cover every user");
    }
    let groups = groups.iter().map(|(ids, merged)| evaluate_group(inst, ids, *merged)).collect::<Result<Vec<_>>>()?;
    Ok(PairingPlan::from_groups(groups))
}

/// Best plan over all perfect matchings (one singleton when the count is
/// odd). Matchings are enumerated by pairing the lowest remaining user with
/// each later user in instance order; ties keep the first plan found.
pub fn exhaustive_pairing(inst: &PairingInstance) -> Result<PairingPlan> {
    inst.validate()?;
    let k = inst.users.len();
    if k > MAX_EXHAUSTIVE_USERS {
        return invalid(format!("exhaustive pairing supports at most {MAX_EXHAUSTIVE_USERS} users, got {k}"));
    }
    let ids: Vec<u32> = inst.users.iter().map(|u| u.user_id).collect();
    let mut cache: HashMap<GroupKey, PairGroup> = HashMap::new();
    for i in 0..k {
        cache.insert((i, None), evaluate_group(inst, &[ids[i]], false)?);
        for j in i + 1..k {
            cache.insert((i, Some(j)), evaluate_group(inst, &[ids[i], ids[j]], false)?);
        }
    }
    let mut best: Option<(f64, Vec<GroupKey>)> = None;
    let mut used = vec![false; k];
    let mut current = Vec::new();
    enumerate_matchings(&mut used, &mut current, k % 2 == 1, &mut |plan| {
        let value = plan_objective(
            plan.iter().map(|key| (Some(ids[key.0].min(key.1.map_or(u32::MAX, |j| ids[j]))), cache[key].sum_rate)),
        );
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, plan.to_vec()));
        }
    });
    let (_, keys) = best.expect("at least one matching");
    Ok(PairingPlan::from_groups(keys.iter().map(|key| cache[key].clone()).collect()))
}

/// Instance indices of a pair, or of a singleton.
type GroupKey = (usize, Option<usize>);

fn enumerate_matchings(
    used: &mut [bool],
    current: &mut Vec<GroupKey>,
    singleton_left: bool,
    visit: &mut impl FnMut(&[GroupKey]),
) {
    let Some(first) = used.iter().position(|u| !u) else {
        visit(current);
        return;
    };
    used[first] = true;
    for j in first + 1..used.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        current.push((first, Some(j)));
        enumerate_matchings(used, current, singleton_left, visit);
        current.pop();
        used[j] = false;
    }
    if singleton_left {
        current.push((first, None));
        enumerate_matchings(used, current, false, visit);
        current.pop();
    }
    used[first] = false;
}

/// Sorts users by average channel power (descending, ties by user id) and
/// pairs rank `i` with rank `K + 1 - i`; an odd count leaves the middle
/// user alone.
pub fn strong_weak_heuristic(inst: &PairingInstance) -> Result<PairingPlan> {
    inst.validate()?;
    let mut ranked: Vec<&ChannelState> = inst.users.iter().collect();
    ranked.sort_by(|a, b| b.power().total_cmp(&a.power()).then(a.user_id.cmp(&b.user_id)));
    let k = ranked.len();
    let mut groups = Vec::with_capacity(k.div_ceil(2));
    for i in 0..k / 2 {
        groups.push((vec![ranked[i].user_id, ranked[k - 1 - i].user_id], false));
    }
    if k % 2 == 1 {
        groups.push((vec![ranked[k / 2].user_id], false));
    }
    evaluate_plan(inst, &groups)
}

/// Replaces every pair closer than `2/N` in direction by one shared narrow
/// beam. Ideal beams always merge; physical beams merge only when the
/// group's sum rate does not drop. Already merged groups are left alone.
pub fn angle_merge(inst: &PairingInstance, plan: &PairingPlan) -> Result<PairingPlan> {
    inst.validate()?;
    let threshold = inst.geom.min_beam_width();
    let mut groups = Vec::with_capacity(plan.groups.len());
    for g in &plan.groups {
        if g.merged || g.user_ids.len() != 2 {
            groups.push(g.clone());
            continue;
        }
        let a = inst.user(g.user_ids[0])?.direction.phi();
        let b = inst.user(g.user_ids[1])?.direction.phi();
        if (a - b).abs() >= threshold {
            groups.push(g.clone());
            continue;
        }
        let merged = evaluate_group(inst, &g.user_ids, true)?;
        let keep = inst.beam_model == BeamModel::Ideal || merged.sum_rate >= g.sum_rate;
        groups.push(if keep { merged } else { g.clone() });
    }
    Ok(PairingPlan::from_groups(groups))
}
