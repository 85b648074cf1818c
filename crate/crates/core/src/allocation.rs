//! Power allocation and joint power/beam-gain search for two-user NOMA.
//!
//! Users are indexed from 0 and reported with ids `index + 1`. The gain
//! line `G1 + G2 = N` is the constraint family the searches work on.

use rayon::prelude::*;

use crate::array::{ArrayGeometry, Awv, Direction};
use crate::design::{BeamTarget, Designer};
use crate::error::{invalid, Error, Result};
use crate::rate::{effective_gain, noma_rates, NomaGroup, NomaMember};

const GOLDEN: f64 = 0.618_033_988_749_894_8;
/// Initial grid points on the gain line before golden-section refinement.
pub const LINE_GRID: usize = 51;
/// Largest axis the grid oracle accepts.
pub const ORACLE_MAX_AXIS: usize = 10_000;
const RATE_TOL: f64 = 1e-12;
/// Weight of a min-rate shortfall in the alternating scheme's score.
const SHORTFALL_PENALTY: f64 = 1e3;

/// `p_i = fraction_i * P`.
pub fn fixed_split(total_power: f64, fractions: &[f64]) -> Result<Vec<f64>> {
    if !(total_power >= 0.0 && total_power.is_finite()) {
        return invalid(format!("total power {total_power} must be finite and nonnegative"));
    }
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
        return invalid(format!("power fractions {fractions:?} must be nonnegative"));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return invalid(format!("power fractions sum to {sum}, not 1"));
    }
    Ok(fractions.iter().map(|f| f * total_power).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocUser {
    /// Average channel power `|g|^2`.
    pub channel_power: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainBudget {
    Fixed(Vec<f64>),
    /// `G1 + G2 = N`.
    SumToN,
    /// `sum G_i * (2/N) <= 2`.
    Budget2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub users: Vec<AllocUser>,
    pub total_power: f64,
    pub noise: f64,
    pub min_rates: Vec<f64>,
    pub gain_budget: GainBudget,
    pub geom: ArrayGeometry,
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return invalid(format!("total power {} must be positive", self.total_power));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return invalid(format!("noise power {} must be positive", self.noise));
        }
        if self.users.is_empty() || self.users.len() != self.min_rates.len() {
            return invalid("need one minimum rate per user");
        }
        if self.min_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return invalid(format!("minimum rates {:?} must be nonnegative", self.min_rates));
        }
        if self.users.iter().any(|u| !(u.channel_power >= 0.0 && u.channel_power.is_finite())) {
            return invalid("channel powers must be finite and nonnegative");
        }
        if let GainBudget::Fixed(g) = &self.gain_budget {
            if g.len() != self.users.len() || g.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return invalid(format!("fixed gains {g:?} do not match the users"));
            }
        }
        Ok(())
    }

    fn require_gain_line(&self) -> Result<()> {
        self.validate()?;
        if self.users.len() != 2 {
            return invalid(format!("two-user problem required, got {} users", self.users.len()));
        }
        if self.gain_budget != GainBudget::SumToN {
            return invalid("search requires the G1 + G2 = N gain line");
        }
        Ok(())
    }

    fn n(&self) -> f64 {
        self.geom.n_antennas() as f64
    }

    fn effective(&self, gains: &[f64]) -> Vec<f64> {
        self.users.iter().zip(gains).map(|(u, &g)| effective_gain(u.channel_power, g, self.noise)).collect()
    }

    /// Index of the user with the smaller average channel power; ties pick
    /// the first user.
    pub fn weak_index(&self) -> usize {
        usize::from(self.users[1].channel_power < self.users[0].channel_power)
    }

    /// Per-user rates, sum rate and min-rate feasibility of `(powers, gains)`.
    pub fn evaluate(&self, powers: &[f64], gains: &[f64]) -> Result<Evaluation> {
        let members = self
            .effective(gains)
            .into_iter()
            .zip(powers)
            .enumerate()
            .map(|(i, (eff, &p))| NomaMember { user_id: i as u32 + 1, effective_gain: eff, power: p })
            .collect();
        let report = noma_rates(&NomaGroup::new(members, self.total_power)?);
        let rates: Vec<f64> = report.per_user.iter().map(|r| r.1).collect();
        let shortfall: f64 = rates.iter().zip(&self.min_rates).map(|(r, m)| (m - r).max(0.0)).sum();
        let feasible = rates.iter().zip(&self.min_rates).all(|(r, m)| *r >= m - RATE_TOL);
        Ok(Evaluation { objective: report.sum_rate, rates, feasible, shortfall })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub rates: Vec<f64>,
    pub feasible: bool,
    /// `sum_i max(0, r_min_i - R_i)`.
    pub shortfall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub powers: Vec<f64>,
    pub gains: Vec<f64>,
    pub awv: Option<Awv>,
    /// Physical gains of `awv` toward each user.
    pub achieved_gains: Option<Vec<f64>>,
    /// Sum rate at `(powers, gains)`.
    pub objective: f64,
    pub feasible: bool,
}

/// Two-user split at fixed effective gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    pub p_strong: f64,
    pub p_weak: f64,
    pub rate_strong: f64,
    pub rate_weak: f64,
    pub objective: f64,
    pub feasible: bool,
}

/// Sum-rate maximising split under minimum rates.
///
/// The sum rate grows with the strong user's share, so the weak user gets
/// exactly the power that meets its minimum rate,
/// `p_w = (2^r - 1)(P Gamma_w + 1)/(Gamma_w 2^r)` clipped to `[0, P]`, and
/// the strong user gets the rest. Both constraints are then re-checked.
/// With equal gains the weak user is decoded first.
pub fn max_sum_rate_2user(
    gamma_strong: f64,
    gamma_weak: f64,
    total_power: f64,
    min_rate_weak: f64,
    min_rate_strong: f64,
) -> Result<PowerSplit> {
    if !(gamma_weak >= 0.0 && gamma_strong >= gamma_weak && gamma_strong.is_finite()) {
        return invalid(format!("need Gamma_s >= Gamma_w >= 0, got {gamma_strong}, {gamma_weak}"));
    }
    if !(total_power >= 0.0 && total_power.is_finite()) {
        return invalid(format!("total power {total_power} must be finite and nonnegative"));
    }
    if !(min_rate_weak >= 0.0 && min_rate_strong >= 0.0) {
        return invalid("minimum rates must be nonnegative");
    }
    let p_weak = if min_rate_weak == 0.0 {
        0.0
    } else if gamma_weak == 0.0 {
        total_power
    } else {
        let lift = min_rate_weak.exp2();
        ((lift - 1.0) * (total_power * gamma_weak + 1.0) / (gamma_weak * lift)).clamp(0.0, total_power)
    };
    let p_strong = total_power - p_weak;
    let group = NomaGroup::new(
        vec![
            NomaMember { user_id: 0, effective_gain: gamma_weak, power: p_weak },
            NomaMember { user_id: 1, effective_gain: gamma_strong, power: p_strong },
        ],
        total_power,
    )?;
    let report = noma_rates(&group);
    let (rate_weak, rate_strong) = (report.per_user[0].1, report.per_user[1].1);
    Ok(PowerSplit {
        p_strong,
        p_weak,
        rate_strong,
        rate_weak,
        objective: report.sum_rate,
        feasible: rate_weak >= min_rate_weak - RATE_TOL && rate_strong >= min_rate_strong - RATE_TOL,
    })
}

/// Best split for `problem` at fixed beam gains, as per-user powers.
fn best_powers(problem: &AllocationProblem, gains: &[f64]) -> Result<Vec<f64>> {
    let eff = problem.effective(gains);
    // the second user is the stronger one on ties, matching the SIC order
    let (s, w) = if eff[1] >= eff[0] { (1, 0) } else { (0, 1) };
    let split = max_sum_rate_2user(eff[s], eff[w], problem.total_power, problem.min_rates[w], problem.min_rates[s])?;
    let mut powers = vec![0.0; 2];
    powers[s] = split.p_strong;
    powers[w] = split.p_weak;
    Ok(powers)
}

fn gains_on_line(n: f64, g2: f64) -> Vec<f64> {
    vec![n - g2, g2]
}

/// Lexicographic ranking: feasible first, then larger objective.
fn better(a: (bool, f64), b: (bool, f64)) -> bool {
    (a.0 && !b.0) || (a.0 == b.0 && a.1 > b.1)
}

/// Maximises `f` over `[0, n]`: a [`LINE_GRID`]-point scan, then
/// golden-section on the bracket around the best grid point. Only strict
/// improvements replace the incumbent.
fn search_line<F>(n: f64, f: F) -> Result<(f64, (bool, f64))>
where
    F: Fn(f64) -> Result<(bool, f64)>,
{
    let step = n / (LINE_GRID - 1) as f64;
    let mut best = (0.0, f(0.0)?);
    for i in 1..LINE_GRID {
        let x = if i == LINE_GRID - 1 { n } else { step * i as f64 };
        let v = f(x)?;
        if better(v, best.1) {
            best = (x, v);
        }
    }
    let mut lo = (best.0 - step).max(0.0);
    let mut hi = (best.0 + step).min(n);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..80 {
        if hi - lo <= 1e-12 * n.max(1.0) {
            break;
        }
        if better(f2, f1) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1)?;
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if better(v, best.1) {
            best = (x, v);
        }
    }
    Ok(best)
}

fn solution_at(problem: &AllocationProblem, powers: Vec<f64>, gains: Vec<f64>) -> Result<AllocationSolution> {
    let eval = problem.evaluate(&powers, &gains)?;
    Ok(AllocationSolution {
        powers,
        gains,
        awv: None,
        achieved_gains: None,
        objective: eval.objective,
        feasible: eval.feasible,
    })
}

/// Joint power and gain allocation on the `G1 + G2 = N` line: an outer
/// search over `G2` with the optimal split at each point. The SIC order is
/// re-derived at every gain pair.
pub fn joint_power_gain_2user(problem: &AllocationProblem) -> Result<AllocationSolution> {
    problem.require_gain_line()?;
    let n = problem.n();
    let (g2, _) = search_line(n, |g2| {
        let gains = gains_on_line(n, g2);
        let powers = best_powers(problem, &gains)?;
        let e = problem.evaluate(&powers, &gains)?;
        Ok((e.feasible, e.objective))
    })?;
    let gains = gains_on_line(n, g2);
    let powers = best_powers(problem, &gains)?;
    solution_at(problem, powers, gains)
}

/// Designs a physical AWV for `solution.gains` and records the achieved
/// gains; the stored objective stays the one of the ideal gains.
pub fn attach_design(
    problem: &AllocationProblem,
    mut solution: AllocationSolution,
    designer: &Designer,
) -> Result<AllocationSolution> {
    let targets: Vec<BeamTarget> =
        problem.users.iter().zip(&solution.gains).map(|(u, &g)| BeamTarget::new(u.direction, g)).collect();
    let design = designer.design(problem.geom, &targets)?;
    solution.achieved_gains = Some(design.achieved_gains);
    solution.awv = Some(design.awv);
    Ok(solution)
}

/// Exhaustive search over a `(p_w, G2)` grid, where `w` is the user with
/// the smaller average channel power and `G1 = N - G2`. Feasible points
/// rank first; ties go to the smaller `p_w`, then the smaller `G2`. A
/// one-point axis sits at the middle of its range.
pub fn brute_force_alloc_oracle(
    problem: &AllocationProblem,
    grid_p: usize,
    grid_g: usize,
) -> Result<AllocationSolution> {
    problem.require_gain_line()?;
    for size in [grid_p, grid_g] {
        if size == 0 || size > ORACLE_MAX_AXIS {
            return invalid(format!("grid size {size} outside [1, {ORACLE_MAX_AXIS}]"));
        }
    }
    let n = problem.n();
    let total = problem.total_power;
    let axis = |size: usize, hi: f64, i: usize| {
        if size == 1 {
            0.5 * hi
        } else if i == size - 1 {
            hi
        } else {
            hi * i as f64 / (size - 1) as f64
        }
    };
    let weak = problem.weak_index();
    let rows: Vec<Result<(bool, f64, usize)>> = (0..grid_g)
        .into_par_iter()
        .map(|gi| {
            let gains = gains_on_line(n, axis(grid_g, n, gi));
            let mut best: Option<(bool, f64, usize)> = None;
            for pi in 0..grid_p {
                let p_w = axis(grid_p, total, pi);
                let mut powers = vec![total - p_w; 2];
                powers[weak] = p_w;
                let e = problem.evaluate(&powers, &gains)?;
                if best.is_none_or(|b| better((e.feasible, e.objective), (b.0, b.1))) {
                    best = Some((e.feasible, e.objective, pi));
                }
            }
            Ok(best.expect("nonempty axis"))
        })
        .collect();

    let mut best: Option<(bool, f64, usize, usize)> = None;
    for (gi, row) in rows.into_iter().enumerate() {
        let (feasible, objective, pi) = row?;
        let replace = match best {
            None => true,
            Some(b) => better((feasible, objective), (b.0, b.1)) || ((feasible, objective) == (b.0, b.1) && pi < b.2),
        };
        if replace {
            best = Some((feasible, objective, pi, gi));
        }
    }
    let (_, _, pi, gi) = best.expect("nonempty grid");
    let p_w = axis(grid_p, total, pi);
    let mut powers = vec![total - p_w; 2];
    powers[weak] = p_w;
    solution_at(problem, powers, gains_on_line(n, axis(grid_g, n, gi)))
}

/// Power-only grid search for any number of users at fixed effective
/// gains: powers are multiples of `P/steps` summing to `P`. Returns the
/// best `(powers, sum_rate)` among points meeting every minimum rate, or
/// `None` when no grid point does. Ties keep the first point in
/// lexicographic order of the power indices.
pub fn power_grid_oracle(
    effective_gains: &[f64],
    total_power: f64,
    min_rates: &[f64],
    steps: usize,
) -> Result<Option<(Vec<f64>, f64)>> {
    let k = effective_gains.len();
    if k == 0 || k != min_rates.len() || steps == 0 {
        return invalid("need matching gains and minimum rates and at least one step");
    }
    let count = binomial(steps + k - 1, k - 1);
    if count > 1e8 {
        return Err(Error::SearchSpaceTooLarge { size: count, limit: 1e8 });
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut units = vec![0usize; k];
    loop_compositions(&mut units, 0, steps, &mut |units| {
        let powers: Vec<f64> = units.iter().map(|&u| total_power * u as f64 / steps as f64).collect();
        let members = effective_gains
            .iter()
            .zip(&powers)
            .enumerate()
            .map(|(i, (&g, &p))| NomaMember { user_id: i as u32, effective_gain: g, power: p })
            .collect();
        let Ok(group) = NomaGroup::new(members, total_power) else { return };
        let report = noma_rates(&group);
        let ok = report.per_user.iter().zip(min_rates).all(|(r, m)| r.1 >= m - RATE_TOL);
        if ok && best.as_ref().is_none_or(|b| report.sum_rate > b.1) {
            best = Some((powers, report.sum_rate));
        }
    });
    Ok(best)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn loop_compositions(units: &mut [usize], idx: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
    if idx == units.len() - 1 {
        units[idx] = left;
        visit(units);
        return;
    }
    for u in 0..=left {
        units[idx] = u;
        loop_compositions(units, idx + 1, left - u, visit);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternatingOptions {
    pub max_iter: usize,
    /// Stop once an iteration improves the score by less than this.
    pub eps: f64,
    /// Starting `G2` target; `N/2` when absent.
    pub initial_g2: Option<f64>,
}

impl Default for AlternatingOptions {
    fn default() -> Self {
        Self { max_iter: 30, eps: 1e-6, initial_g2: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingOutcome {
    pub solution: AllocationSolution,
    /// Gain targets the final AWV was designed for.
    pub target_gains: Vec<f64>,
    /// Score after the start and after every accepted iteration. The score
    /// is the sum rate minus a penalty on unmet minimum rates.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct AltState {
    targets: Vec<f64>,
    awv: Awv,
    achieved: Vec<f64>,
    powers: Vec<f64>,
    score: f64,
}

fn score(e: &Evaluation) -> f64 {
    e.objective - SHORTFALL_PENALTY * e.shortfall
}

fn design_state(problem: &AllocationProblem, designer: &Designer, targets: Vec<f64>) -> Result<AltState> {
    let beam_targets: Vec<BeamTarget> =
        problem.users.iter().zip(&targets).map(|(u, &g)| BeamTarget::new(u.direction, g)).collect();
    let design = designer.design(problem.geom, &beam_targets).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("beam design for targets {targets:?}: {msg}")),
        other => other,
    })?;
    let powers = best_powers(problem, &design.achieved_gains)?;
    let score = score(&problem.evaluate(&powers, &design.achieved_gains)?);
    Ok(AltState { targets, awv: design.awv, achieved: design.achieved_gains, powers, score })
}

/// Alternates between the optimal split at the current physical gains and a
/// golden-section re-split of the gain targets at fixed powers, redesigning
/// the AWV after each re-split. An iteration that lowers the score is
/// rejected and ends the run, so the score never decreases.
pub fn alternating_optimize(
    problem: &AllocationProblem,
    designer: &Designer,
    opts: &AlternatingOptions,
) -> Result<AlternatingOutcome> {
    problem.require_gain_line()?;
    if opts.max_iter == 0 || !(opts.eps >= 0.0) {
        return invalid("max_iter must be positive and eps nonnegative");
    }
    let n = problem.n();
    let g2 = opts.initial_g2.unwrap_or(n / 2.0);
    if !(0.0..=n).contains(&g2) {
        return invalid(format!("initial G2 {g2} outside [0, {n}]"));
    }
    let mut state = design_state(problem, designer, gains_on_line(n, g2))?;
    let mut trace = vec![state.score];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let powers = state.powers.clone();
        let (g2, _) = search_line(n, |g2| {
            let e = problem.evaluate(&powers, &gains_on_line(n, g2))?;
            Ok((true, score(&e)))
        })?;
        let next = design_state(problem, designer, gains_on_line(n, g2))?;
        if next.score < state.score {
            converged = true;
            break;
        }
        let gain = next.score - state.score;
        state = next;
        trace.push(state.score);
        if gain < opts.eps {
            converged = true;
            break;
        }
    }
    let mut solution = solution_at(problem, state.powers, state.achieved.clone())?;
    solution.awv = Some(state.awv);
    solution.achieved_gains = Some(state.achieved);
    Ok(AlternatingOutcome { solution, target_gains: state.targets, trace, iterations, converged })
}

/// Equal gain targets with the fixed split (`strong_fraction` to the user
/// with the larger average channel power), designed with `designer`.
pub fn fixed_split_baseline(
    problem: &AllocationProblem,
    designer: &Designer,
    strong_fraction: f64,
) -> Result<AllocationSolution> {
    problem.require_gain_line()?;
    let n = problem.n();
    let state = design_state(problem, designer, gains_on_line(n, n / 2.0))?;
    let weak = problem.weak_index();
    let split = fixed_split(problem.total_power, &[strong_fraction, 1.0 - strong_fraction])?;
    let mut powers = vec![split[0]; 2];
    powers[weak] = split[1];
    let mut solution = solution_at(problem, powers, state.achieved.clone())?;
    solution.awv = Some(state.awv);
    solution.achieved_gains = Some(state.achieved);
    Ok(solution)
}
