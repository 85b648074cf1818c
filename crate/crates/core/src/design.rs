//! Constant-modulus AWV synthesis for one analog RF chain.
//!
//! * [`steer_single`]: one narrow beam, gain `N` at the target.
//! * [`wide_beam`]: one flat-ish beam covering an interval of width `B`.
//! * [`subarray_multibeam`]: contiguous sub-arrays steered at different
//!   targets, combined with per-sub-array phase coefficients.
//! * [`cm_optimize_multibeam`]: relaxed max-weight minimisation with
//!   alternating phase references, followed by a CM projection that keeps
//!   every element's phase.
//! * [`exhaustive_cm_oracle`]: brute force over quantised phases for small
//!   arrays, used as ground truth.
//!
//! Every designer returns a unit-norm CM vector and reports achieved power
//! gains re-evaluated through [`beam_gain`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::array::{beam_gain, steering_entry, ArrayGeometry, Awv, Direction};
use crate::error::{invalid, Error, Result};

/// Phase levels per sub-array coefficient in the grid search.
pub const COEFF_LEVELS: usize = 64;
/// Achieved/target ratio below which a design is flagged as short.
pub const SHORTFALL_RATIO: f64 = 0.9;
/// Random phase-reference restarts tried after a short first run.
pub const RESTARTS: usize = 8;
/// Largest search space the exhaustive oracle will enumerate (`16^7`).
pub const ORACLE_LIMIT: f64 = (1u64 << 28) as f64;
/// Largest array the exhaustive oracle accepts.
pub const ORACLE_MAX_ANTENNAS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamTarget {
    pub direction: Direction,
    /// Desired power gain.
    pub target_gain: f64,
}

impl BeamTarget {
    pub fn new(direction: Direction, target_gain: f64) -> Self {
        Self { direction, target_gain }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub awv: Awv,
    pub targets: Vec<BeamTarget>,
    /// Power gains of `awv` toward each target, in target order.
    pub achieved_gains: Vec<f64>,
    /// Final max-weight objective. CM designs report `1/sqrt(N)`.
    pub alpha: f64,
    /// Objective per accepted iteration of the relaxed scheme.
    pub alpha_trace: Vec<f64>,
    pub iterations: usize,
    /// Some target received less than [`SHORTFALL_RATIO`] of its gain.
    pub shortfall: bool,
}

impl DesignResult {
    fn new(awv: Awv, targets: &[BeamTarget], alpha: f64, alpha_trace: Vec<f64>, iterations: usize) -> Self {
        let achieved_gains: Vec<f64> = targets.iter().map(|t| beam_gain(&awv, t.direction)).collect();
        let shortfall = targets.iter().zip(&achieved_gains).any(|(t, &g)| g < SHORTFALL_RATIO * t.target_gain);
        Self {
            awv,
            targets: targets.to_vec(),
            achieved_gains,
            alpha,
            alpha_trace,
            iterations: iterations.max(1),
            shortfall,
        }
    }

    /// `min_i achieved_i / target_i` over targets with positive gain;
    /// infinite when no target asks for gain.
    pub fn min_ratio(&self) -> f64 {
        min_ratio(&self.targets, &self.achieved_gains)
    }
}

fn min_ratio(targets: &[BeamTarget], achieved: &[f64]) -> f64 {
    targets
        .iter()
        .zip(achieved)
        .filter(|(t, _)| t.target_gain > 0.0)
        .map(|(t, g)| g / t.target_gain)
        .fold(f64::INFINITY, f64::min)
}

fn validate_targets(geom: ArrayGeometry, targets: &[BeamTarget]) -> Result<()> {
    if targets.is_empty() {
        return invalid("no beam targets");
    }
    if targets.len() > geom.n_antennas() {
        return invalid(format!("{} targets exceed the {} available antennas", targets.len(), geom.n_antennas()));
    }
    for (i, t) in targets.iter().enumerate() {
        if !(t.target_gain >= 0.0 && t.target_gain.is_finite()) {
            return invalid(format!("target {i} has invalid gain {}", t.target_gain));
        }
        if targets[..i].iter().any(|o| o.direction == t.direction) {
            return invalid(format!("duplicate target direction {}", t.direction.phi()));
        }
    }
    Ok(())
}

/// Which multi-beam designer downstream code should call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Designer {
    Subarray,
    CmOptimize(CmOptions),
}

impl Designer {
    pub fn design(&self, geom: ArrayGeometry, targets: &[BeamTarget]) -> Result<DesignResult> {
        match self {
            Designer::Subarray => subarray_multibeam(geom, targets, None),
            Designer::CmOptimize(opts) => cm_optimize_multibeam(geom, targets, opts),
        }
    }
}

/// `w = a(phi)/sqrt(N)`.
pub fn steer_single(geom: ArrayGeometry, d: Direction) -> Awv {
    let phases: Vec<f64> = (0..geom.n_antennas()).map(|n| PI * n as f64 * d.phi()).collect();
    Awv::from_phases(&phases).expect("finite phases")
}

// ---------------------------------------------------------------------------
// Wide beams
// ---------------------------------------------------------------------------

/// CM beam covering `[center - width/2, center + width/2]`.
///
/// Two starts are refined and the flatter result is kept:
/// `ceil(width*N/2)` contiguous sub-arrays steered at the centres of equal
/// sub-intervals with coefficient search, and a linear-frequency chirp. Both
/// are refined per element by minimising the worst in-beam deviation
/// `|ln(G/(2/width))|`. A width of `2/N` is a plain steered beam.
pub fn wide_beam(geom: ArrayGeometry, center: Direction, width: f64) -> Result<Awv> {
    let n = geom.n_antennas();
    let min_width = geom.min_beam_width();
    if !(width.is_finite() && width >= min_width - 1e-12 && width <= 2.0 + 1e-12) {
        return invalid(format!("beam width {width} outside [{min_width}, 2]"));
    }
    let k = ((width * n as f64 / 2.0) - 1e-9).ceil().max(1.0) as usize;
    if k <= 1 {
        return Ok(steer_single(geom, center));
    }

    let lo = (center.phi() - width / 2.0).max(-1.0);
    let hi = (center.phi() + width / 2.0).min(1.0);
    let points = 4 * (width * n as f64).ceil() as usize + 9;
    let grid: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let steer = SteeringTable::new(n, &grid);
    let ideal = 2.0 / width;

    let subarray_start = subarray_wide_start(n, center.phi(), width, k, &steer);
    let chirp_start: Vec<f64> = (0..n)
        .map(|i| {
            let i = i as f64;
            PI * ((center.phi() - width / 2.0) * i + width * i * i / (2.0 * n as f64))
        })
        .collect();

    let best = [subarray_start, chirp_start]
        .into_iter()
        .map(|start| {
            let phases = refine_ripple(start, &steer, ideal);
            let ripple = worst_log_ripple(&steer.gains(&phases), ideal);
            (ripple, phases)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("two starts");
    Awv::from_phases(&best.1)
}

fn worst_log_ripple(gains: &[f64], ideal: f64) -> f64 {
    gains.iter().map(|g| (g.max(1e-300) / ideal).ln().abs()).fold(0.0, f64::max)
}

fn subarray_wide_start(n: usize, center: f64, width: f64, k: usize, steer: &SteeringTable) -> Vec<f64> {
    let sizes = even_sizes(n, k);
    let dirs: Vec<f64> = (0..k).map(|m| center - width / 2.0 + (m as f64 + 0.5) * width / k as f64).collect();
    let base = |theta: &[f64]| -> Vec<f64> {
        let mut phases = Vec::with_capacity(n);
        let mut idx = 0;
        for m in 0..k {
            for _ in 0..sizes[m] {
                phases.push(PI * idx as f64 * dirs[m] + theta[m]);
                idx += 1;
            }
        }
        phases
    };
    let score = |theta: &[f64]| steer.gains(&base(theta)).into_iter().fold(f64::INFINITY, f64::min);

    // cyclic coordinate search over the coefficient grid, theta_0 fixed
    let mut theta = vec![0.0; k];
    let mut best = score(&theta);
    for _sweep in 0..4 {
        let mut improved = false;
        for m in 1..k {
            for q in 0..COEFF_LEVELS {
                let cand = 2.0 * PI * q as f64 / COEFF_LEVELS as f64;
                let old = theta[m];
                theta[m] = cand;
                let s = score(&theta);
                if s > best {
                    best = s;
                    improved = true;
                } else {
                    theta[m] = old;
                }
            }
        }
        if !improved {
            break;
        }
    }
    base(&theta)
}

fn even_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|m| n / k + usize::from(m < n % k)).collect()
}

/// `a_n(phi_g)` for every grid direction, row-major by direction.
struct SteeringTable {
    n: usize,
    rows: Vec<Complex64>,
}

impl SteeringTable {
    fn new(n: usize, grid: &[f64]) -> Self {
        let rows = grid.iter().flat_map(|&phi| (0..n).map(move |i| steering_entry(i, phi))).collect();
        Self { n, rows }
    }

    fn len(&self) -> usize {
        self.rows.len() / self.n
    }

    /// `y_g = w^H a(phi_g)` with `w_n = exp(j theta_n)/sqrt(N)`.
    fn responses(&self, phases: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let scale = 1.0 / (self.n as f64).sqrt();
        let cw: Vec<Complex64> = phases.iter().map(|&p| Complex64::from_polar(scale, -p)).collect();
        let y = self.rows.chunks_exact(self.n).map(|row| row.iter().zip(&cw).map(|(a, c)| a * c).sum()).collect();
        (y, cw)
    }

    fn gains(&self, phases: &[f64]) -> Vec<f64> {
        self.responses(phases).0.iter().map(|y| y.norm_sqr()).collect()
    }
}

/// Smoothed `-max_g |ln(G_g/ideal)|` and its gradient in the phases.
fn ripple_objective(phases: &[f64], steer: &SteeringTable, ideal: f64, temp: f64) -> (f64, Vec<f64>) {
    let (y, cw) = steer.responses(phases);
    let gains: Vec<f64> = y.iter().map(|v| v.norm_sqr().max(1e-300)).collect();
    let logs: Vec<f64> = gains.iter().map(|g| (g / ideal).ln()).collect();
    let peak = logs.iter().map(|r| temp * r.abs()).fold(f64::MIN, f64::max);
    let mut lower = Vec::with_capacity(gains.len());
    let mut upper = Vec::with_capacity(gains.len());
    let mut total = 0.0;
    for r in &logs {
        let a = (-temp * r - peak).exp();
        let b = (temp * r - peak).exp();
        total += a + b;
        lower.push(a);
        upper.push(b);
    }
    let value = -(peak + total.ln()) / temp;

    // d value / d G_g = (p_lower - p_upper) / G_g
    let mut grad = vec![0.0; phases.len()];
    for (g, row) in steer.rows.chunks_exact(steer.n).enumerate() {
        let coef = (lower[g] - upper[g]) / (total * gains[g]);
        if coef == 0.0 {
            continue;
        }
        let yc = y[g].conj();
        for (i, (a, c)) in row.iter().zip(&cw).enumerate() {
            // dy/dtheta_i = -j conj(w_i) a_i
            let dy = Complex64::new(0.0, -1.0) * c * a;
            grad[i] += coef * 2.0 * (yc * dy).re;
        }
    }
    (value, grad)
}

fn refine_ripple(mut phases: Vec<f64>, steer: &SteeringTable, ideal: f64) -> Vec<f64> {
    debug_assert!(steer.len() >= 2);
    for temp in [4.0, 16.0, 64.0, 256.0] {
        let mut step = 1.0;
        let (mut value, mut grad) = ripple_objective(&phases, steer, ideal, temp);
        for _ in 0..400 {
            let slope: f64 = grad.iter().map(|g| g * g).sum();
            if slope < 1e-18 {
                break;
            }
            let mut accepted = false;
            while step > 1e-12 {
                let cand: Vec<f64> = phases.iter().zip(&grad).map(|(p, g)| p + step * g).collect();
                let (v, gr) = ripple_objective(&cand, steer, ideal, temp);
                if v >= value + 1e-4 * step * slope {
                    let gain = v - value;
                    phases = cand;
                    value = v;
                    grad = gr;
                    step *= 1.5;
                    accepted = gain > 1e-12;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
    phases
}

// ---------------------------------------------------------------------------
// Sub-array multi-beam
// ---------------------------------------------------------------------------

/// Sub-array sizes proportional to `sqrt(G_i)`, each at least one antenna,
/// rounded by largest remainder so they sum to `n`.
pub fn default_subarray_sizes(n: usize, targets: &[BeamTarget]) -> Vec<usize> {
    let k = targets.len();
    let amps: Vec<f64> = targets.iter().map(|t| t.target_gain.sqrt()).collect();
    let total: f64 = amps.iter().sum();
    let raw: Vec<f64> =
        if total > 0.0 { amps.iter().map(|a| n as f64 * a / total).collect() } else { vec![n as f64 / k as f64; k] };
    let mut sizes: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).max(1)).collect();
    let remainder = |i: usize, sizes: &[usize]| raw[i] - sizes[i] as f64;
    while sizes.iter().sum::<usize>() < n {
        let i = (0..k)
            .max_by(|&a, &b| remainder(a, &sizes).total_cmp(&remainder(b, &sizes)).then(b.cmp(&a)))
            .expect("nonempty");
        sizes[i] += 1;
    }
    while sizes.iter().sum::<usize>() > n {
        let i = (0..k)
            .filter(|&i| sizes[i] > 1)
            .min_by(|&a, &b| remainder(a, &sizes).total_cmp(&remainder(b, &sizes)).then(a.cmp(&b)))
            .expect("k <= n leaves a reducible block");
        sizes[i] -= 1;
    }
    sizes
}

/// Contiguous sub-arrays, block `m` steered at target `m`, each scaled by a
/// coefficient `exp(j theta_m)` chosen to maximise the minimum
/// achieved/target ratio.
///
/// `theta_0 = 0`; the others range over a 64-level grid, searched
/// exhaustively for up to four targets and by cyclic coordinate ascent beyond
/// that. Ties keep the lexicographically first coefficient tuple.
pub fn subarray_multibeam(
    geom: ArrayGeometry,
    targets: &[BeamTarget],
    sizes: Option<&[usize]>,
) -> Result<DesignResult> {
    validate_targets(geom, targets)?;
    let n = geom.n_antennas();
    let k = targets.len();
    let sizes = match sizes {
        Some(s) => {
            if s.len() != k || s.contains(&0) || s.iter().sum::<usize>() != n {
                return invalid(format!("sub-array sizes {s:?} must be {k} positive blocks summing to {n}"));
            }
            s.to_vec()
        }
        None => default_subarray_sizes(n, targets),
    };

    // block m with theta = 0 contributes s[m][i] to w^H a(phi_i)
    let scale = 1.0 / (n as f64).sqrt();
    let mut blocks = Vec::with_capacity(k);
    let mut start = 0;
    for (m, &len) in sizes.iter().enumerate() {
        let steer_phi = targets[m].direction.phi();
        let contrib: Vec<Complex64> = targets
            .iter()
            .map(|t| (start..start + len).map(|i| steering_entry(i, t.direction.phi() - steer_phi) * scale).sum())
            .collect();
        blocks.push(contrib);
        start += len;
    }

    let rotors: Vec<Complex64> =
        (0..COEFF_LEVELS).map(|q| Complex64::from_polar(1.0, -2.0 * PI * q as f64 / COEFF_LEVELS as f64)).collect();
    let any_positive = targets.iter().any(|t| t.target_gain > 0.0);
    let score = |levels: &[usize]| -> f64 {
        let mut worst = f64::INFINITY;
        for (i, t) in targets.iter().enumerate() {
            let y: Complex64 = blocks.iter().zip(levels).map(|(b, &q)| b[i] * rotors[q]).sum();
            let g = y.norm_sqr();
            let v = if any_positive {
                if t.target_gain > 0.0 {
                    g / t.target_gain
                } else {
                    continue;
                }
            } else {
                g
            };
            worst = worst.min(v);
        }
        worst
    };

    let mut levels = vec![0usize; k];
    let mut sweeps = 1;
    if k > 1 {
        if k <= 4 {
            let total = COEFF_LEVELS.pow((k - 1) as u32);
            let mut best = (f64::NEG_INFINITY, 0usize);
            let mut cand = vec![0usize; k];
            for code in 0..total {
                let mut c = code;
                for slot in cand[1..].iter_mut().rev() {
                    *slot = c % COEFF_LEVELS;
                    c /= COEFF_LEVELS;
                }
                let s = score(&cand);
                if s > best.0 {
                    best = (s, code);
                }
            }
            let mut c = best.1;
            for slot in levels[1..].iter_mut().rev() {
                *slot = c % COEFF_LEVELS;
                c /= COEFF_LEVELS;
            }
        } else {
            let mut best = score(&levels);
            sweeps = 0;
            loop {
                sweeps += 1;
                let mut improved = false;
                for m in 1..k {
                    for q in 0..COEFF_LEVELS {
                        let old = levels[m];
                        levels[m] = q;
                        let s = score(&levels);
                        if s > best {
                            best = s;
                            improved = true;
                        } else {
                            levels[m] = old;
                        }
                    }
                }
                if !improved || sweeps >= 50 {
                    break;
                }
            }
        }
    }

    let mut phases = Vec::with_capacity(n);
    let mut idx = 0;
    for (m, &len) in sizes.iter().enumerate() {
        let theta = 2.0 * PI * levels[m] as f64 / COEFF_LEVELS as f64;
        for _ in 0..len {
            phases.push(PI * idx as f64 * targets[m].direction.phi() + theta);
            idx += 1;
        }
    }
    let awv = Awv::from_phases(&phases)?;
    Ok(DesignResult::new(awv, targets, scale, vec![scale], sweeps))
}

// ---------------------------------------------------------------------------
// Relaxed optimisation with CM projection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmOptions {
    /// Stop once alpha improves by less than this; also the slack on the
    /// gain budget check.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the random phase-reference restarts.
    pub restart_seed: u64,
}

impl Default for CmOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50, restart_seed: 0 }
    }
}

/// Relaxed multi-beam design.
///
/// With phase references `psi_i` fixed, solves
///
/// ```text
/// minimise alpha  s.t.  |w_n| <= alpha,  Re(exp(-j psi_i) a(phi_i)^H w) >= sqrt(G_i)
/// ```
///
/// then moves each `psi_i` to `arg(a(phi_i)^H w)`, which keeps the previous
/// `w` feasible, so alpha never increases. The final `w` is projected onto
/// the CM set with its phases unchanged. If the projected design misses a
/// target by more than 10 %, the scheme is rerun from [`RESTARTS`] random
/// phase references and the best min-ratio design is returned.
pub fn cm_optimize_multibeam(geom: ArrayGeometry, targets: &[BeamTarget], opts: &CmOptions) -> Result<DesignResult> {
    validate_targets(geom, targets)?;
    if !(opts.tol > 0.0 && opts.tol.is_finite()) || opts.max_iter == 0 {
        return invalid("tolerance must be positive and max_iter at least 1");
    }
    let n = geom.n_antennas();
    let budget: f64 = targets.iter().map(|t| t.target_gain * geom.min_beam_width()).sum();
    if budget > 2.0 * (1.0 + opts.tol) {
        return Err(Error::Infeasible(format!("gain-width budget {budget:.6} exceeds 2 for {n} antennas")));
    }

    let active: Vec<BeamTarget> = targets.iter().copied().filter(|t| t.target_gain > 0.0).collect();
    if active.is_empty() {
        let awv = steer_single(geom, targets[0].direction);
        return Ok(DesignResult::new(awv, targets, 0.0, vec![0.0], 1));
    }
    let steering: Vec<Vec<Complex64>> =
        active.iter().map(|t| (0..n).map(|i| steering_entry(i, t.direction.phi())).collect()).collect();
    let rhs: Vec<f64> = active.iter().map(|t| t.target_gain.sqrt()).collect();

    let run = |psi: Vec<f64>| -> Result<DesignResult> {
        let relaxed = alternate_phase_references(&steering, &rhs, psi, opts)?;
        let awv = Awv::from_weights(relaxed.weights)?.project_cm();
        Ok(DesignResult::new(awv, targets, relaxed.alpha, relaxed.trace, relaxed.iterations))
    };

    let mut best = run(vec![0.0; active.len()])?;
    if best.shortfall {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.restart_seed);
        for _ in 0..RESTARTS {
            let psi: Vec<f64> = (0..active.len()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let cand = run(psi)?;
            if cand.min_ratio() > best.min_ratio() {
                best = cand;
            }
        }
    }
    Ok(best)
}

struct RelaxedOutcome {
    weights: Vec<Complex64>,
    alpha: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn alternate_phase_references(
    steering: &[Vec<Complex64>],
    rhs: &[f64],
    mut psi: Vec<f64>,
    opts: &CmOptions,
) -> Result<RelaxedOutcome> {
    let mut trace: Vec<f64> = Vec::new();
    let mut weights: Option<Vec<Complex64>> = None;
    for _ in 0..opts.max_iter {
        let rows: Vec<Vec<Complex64>> = steering
            .iter()
            .zip(&psi)
            .map(|(a, &p)| {
                let rot = Complex64::from_polar(1.0, p);
                a.iter().map(|x| x * rot).collect()
            })
            .collect();
        let sol = solve_max_weight(&rows, rhs)?;
        if let Some(&prev) = trace.last() {
            if sol.alpha > prev {
                // the previous iterate stays feasible; nothing gained
                break;
            }
        }
        for (p, a) in psi.iter_mut().zip(steering) {
            let resp: Complex64 = a.iter().zip(&sol.weights).map(|(x, w)| x.conj() * w).sum();
            *p = resp.arg();
        }
        let done = trace.last().is_some_and(|&prev| prev - sol.alpha < opts.tol);
        trace.push(sol.alpha);
        weights = Some(sol.weights);
        if done {
            break;
        }
    }
    let weights = weights.ok_or_else(|| Error::Infeasible("relaxed program produced no iterate".into()))?;
    Ok(RelaxedOutcome { alpha: *trace.last().expect("one iterate"), iterations: trace.len(), weights, trace })
}

pub(crate) struct MaxWeightSolution {
    pub weights: Vec<Complex64>,
    /// Primal objective of `weights` (feasible).
    pub alpha: f64,
    /// Dual lower bound on the optimum.
    #[cfg_attr(not(test), allow(dead_code))]
    pub lower_bound: f64,
}

/// `min alpha s.t. |w_n| <= alpha, Re(c_i^H w) >= b_i` with every `b_i > 0`.
///
/// Works on the dual `min_{mu in simplex} || sum_i (mu_i/b_i) c_i ||_1`, whose
/// reciprocal is the optimum. The l1 norm is smoothed with a shrinking
/// `eps`; each stage yields a primal point `w ~ sign(v)` scaled to
/// feasibility, and iteration stops once the primal value is within `1e-7`
/// (relative) of the dual bound.
pub(crate) fn solve_max_weight(rows: &[Vec<Complex64>], rhs: &[f64]) -> Result<MaxWeightSolution> {
    let k = rows.len();
    let n = rows[0].len();
    let combine = |mu: &[f64]| -> Vec<Complex64> {
        let mut v = vec![Complex64::default(); n];
        for ((row, &m), &b) in rows.iter().zip(mu).zip(rhs) {
            let s = m / b;
            for (vi, ci) in v.iter_mut().zip(row) {
                *vi += ci * s;
            }
        }
        v
    };
    let smoothed = |mu: &[f64], eps: f64| -> (f64, Vec<f64>) {
        let v = combine(mu);
        let mut value = 0.0;
        let mut grad = vec![0.0; k];
        for (idx, vi) in v.iter().enumerate() {
            let r = (vi.norm_sqr() + eps * eps).sqrt();
            value += r;
            for (i, row) in rows.iter().enumerate() {
                grad[i] += (vi.conj() * row[idx]).re / (rhs[i] * r);
            }
        }
        (value, grad)
    };
    let primal = |mu: &[f64], eps: f64| -> Option<(Vec<Complex64>, f64)> {
        let v = combine(mu);
        let w: Vec<Complex64> = v.iter().map(|x| x / (x.norm_sqr() + eps * eps).sqrt()).collect();
        let mut scale: f64 = 0.0;
        for (row, &b) in rows.iter().zip(rhs) {
            let re: f64 = row.iter().zip(&w).map(|(c, x)| (c.conj() * x).re).sum();
            if re <= 0.0 {
                return None;
            }
            scale = scale.max(b / re);
        }
        let peak = w.iter().map(|x| x.norm()).fold(0.0, f64::max);
        Some((w.into_iter().map(|x| x * scale).collect(), scale * peak))
    };

    let mut mu = vec![1.0 / k as f64; k];
    let typical = combine(&mu).iter().map(|x| x.norm()).sum::<f64>() / n as f64;
    let mut best: Option<(Vec<Complex64>, f64)> = None;
    let mut lower = 0.0f64;
    let mut eps = 0.1 * typical.max(f64::MIN_POSITIVE);
    let floor = 1e-10 * typical.max(f64::MIN_POSITIVE);
    loop {
        if k > 1 {
            let mut step = 1.0 / typical.max(f64::MIN_POSITIVE);
            let (mut value, mut grad) = smoothed(&mu, eps);
            for _ in 0..5000 {
                let mut moved = false;
                while step > 1e-30 {
                    let cand = project_simplex(mu.iter().zip(&grad).map(|(m, g)| m - step * g).collect());
                    let diff: f64 = cand.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum();
                    if diff == 0.0 {
                        break;
                    }
                    let (v, g) = smoothed(&cand, eps);
                    let decrease: f64 = grad.iter().zip(cand.iter().zip(&mu)).map(|(g, (c, m))| g * (m - c)).sum();
                    if v <= value - 0.5 * decrease.max(0.0) {
                        moved = value - v > 1e-15 * value;
                        mu = cand;
                        value = v;
                        grad = g;
                        step *= 2.0;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
        }
        let l1: f64 = combine(&mu).iter().map(|x| x.norm()).sum();
        lower = lower.max(1.0 / l1);
        if let Some((w, alpha)) = primal(&mu, eps) {
            if best.as_ref().is_none_or(|b| alpha < b.1) {
                best = Some((w, alpha));
            }
        }
        let gap_closed = best.as_ref().is_some_and(|b| b.1 - lower <= 1e-7 * lower);
        if gap_closed || eps <= floor {
            break;
        }
        eps *= 0.1;
    }
    let (weights, alpha) =
        best.ok_or_else(|| Error::Infeasible("relaxed gain constraints admit no feasible weight vector".into()))?;
    Ok(MaxWeightSolution { weights, alpha, lower_bound: lower })
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(mut x: Vec<f64>) -> Vec<f64> {
    let mut sorted = x.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    for v in &mut x {
        *v = (*v - tau).max(0.0);
    }
    x
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

/// Enumerates every CM vector with phases `2 pi k/Q` (first phase fixed to
/// zero) and returns the one maximising the minimum achieved/target ratio.
/// Ties go to the lexicographically smallest phase-index tuple.
pub fn exhaustive_cm_oracle(geom: ArrayGeometry, targets: &[BeamTarget], levels: usize) -> Result<DesignResult> {
    validate_targets(geom, targets)?;
    let n = geom.n_antennas();
    if n > ORACLE_MAX_ANTENNAS {
        return invalid(format!("oracle supports at most {ORACLE_MAX_ANTENNAS} antennas, got {n}"));
    }
    if levels == 0 {
        return invalid("need at least one phase level");
    }
    let size = (levels as f64).powi(n as i32 - 1);
    if size > ORACLE_LIMIT {
        return Err(Error::SearchSpaceTooLarge { size, limit: ORACLE_LIMIT });
    }

    let any_positive = targets.iter().any(|t| t.target_gain > 0.0);
    // weights[i] scales |y_i|^2 into the objective; 0 marks an ignored target
    let weights: Vec<f64> = targets
        .iter()
        .map(|t| match (any_positive, t.target_gain > 0.0) {
            (true, true) => 1.0 / t.target_gain,
            (true, false) => 0.0,
            (false, _) => 1.0,
        })
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    // table[(i*levels + q)*kt + t]: conj(w_i) a_i(phi_t) for phase level q
    let kt = targets.len();
    let mut table = vec![Complex64::default(); n * levels * kt];
    for i in 0..n {
        for q in 0..levels {
            let conj_w = Complex64::from_polar(scale, -2.0 * PI * q as f64 / levels as f64);
            for (t, target) in targets.iter().enumerate() {
                table[(i * levels + q) * kt + t] = conj_w * steering_entry(i, target.direction.phi());
            }
        }
    }
    let search = OracleSearch { n, levels, kt, table: &table, weights: &weights, scale };

    let root: Vec<Complex64> = (0..kt).map(|t| table[t]).collect();
    let best = if n == 1 {
        (search.score(&root), vec![0usize])
    } else {
        let branches: Vec<(f64, Vec<usize>, usize)> = (0..levels)
            .into_par_iter()
            .map(|q| {
                let mut sums: Vec<Complex64> =
                    root.iter().enumerate().map(|(t, r)| r + table[(levels + q) * kt + t]).collect();
                let mut state = BranchState { best: f64::NEG_INFINITY, best_tuple: Vec::new(), visited: 0 };
                let mut tuple = vec![0usize, q];
                search.descend(2, &mut sums, &mut tuple, &mut state);
                (state.best, state.best_tuple, state.visited)
            })
            .collect();
        let visited: usize = branches.iter().map(|b| b.2).sum();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for (value, tuple, _) in branches {
            if value > best.0 {
                best = (value, tuple);
            }
        }
        let _ = visited;
        best
    };
    let phases: Vec<f64> = best.1.iter().map(|&q| 2.0 * PI * q as f64 / levels as f64).collect();
    let awv = Awv::from_phases(&phases)?;
    Ok(DesignResult::new(awv, targets, scale, vec![scale], 1))
}

struct OracleSearch<'a> {
    n: usize,
    levels: usize,
    kt: usize,
    table: &'a [Complex64],
    weights: &'a [f64],
    scale: f64,
}

struct BranchState {
    best: f64,
    best_tuple: Vec<usize>,
    visited: usize,
}

impl OracleSearch<'_> {
    fn score(&self, sums: &[Complex64]) -> f64 {
        sums.iter()
            .zip(self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(s, w)| s.norm_sqr() * w)
            .fold(f64::INFINITY, f64::min)
    }

    /// Upper bound on the objective of any completion with `remaining`
    /// free antennas.
    fn bound(&self, sums: &[Complex64], remaining: usize) -> f64 {
        let slack = remaining as f64 * self.scale;
        sums.iter()
            .zip(self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(s, w)| (s.norm() + slack).powi(2) * w)
            .fold(f64::INFINITY, f64::min)
    }

    fn descend(&self, depth: usize, sums: &mut [Complex64], tuple: &mut Vec<usize>, state: &mut BranchState) {
        if depth == self.n {
            state.visited += 1;
            let s = self.score(sums);
            if s > state.best {
                state.best = s;
                state.best_tuple = tuple.clone();
            }
            return;
        }
        if state.best.is_finite() && self.bound(sums, self.n - depth) < state.best * (1.0 - 1e-12) {
            return;
        }
        for q in 0..self.levels {
            let base = (depth * self.levels + q) * self.kt;
            for (t, s) in sums.iter_mut().enumerate() {
                *s += self.table[base + t];
            }
            tuple.push(q);
            self.descend(depth + 1, sums, tuple, state);
            tuple.pop();
            for (t, s) in sums.iter_mut().enumerate() {
                *s -= self.table[base + t];
            }
        }
    }
}

/// Width of the region around `center` where the gain stays at or above
/// half of the gain at `center`, walked outward in steps of `step`.
pub fn half_power_width(awv: &Awv, center: Direction, step: f64) -> f64 {
    let peak = beam_gain(awv, center);
    let walk = |sign: f64| {
        let mut offset = 0.0;
        loop {
            let next = offset + step;
            let phi = center.phi() + sign * next;
            if !(-1.0..=1.0).contains(&phi) || beam_gain(awv, Direction::saturating(phi)) < 0.5 * peak {
                return offset;
            }
            offset = next;
        }
    };
    walk(-1.0) + walk(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::pattern;

    fn dir(phi: f64) -> Direction {
        Direction::new(phi).unwrap()
    }

    fn geom(n: usize) -> ArrayGeometry {
        ArrayGeometry::new(n).unwrap()
    }

    fn assert_cm_unit(awv: &Awv) {
        let n = awv.len() as f64;
        assert!((awv.norm_sqr() - 1.0).abs() < 1e-9);
        for w in awv.weights() {
            assert!((w.norm() - 1.0 / n.sqrt()).abs() < 1e-9);
        }
    }

    fn assert_gains_consistent(r: &DesignResult) {
        for (t, g) in r.targets.iter().zip(&r.achieved_gains) {
            assert!((beam_gain(&r.awv, t.direction) - g).abs() < 1e-9);
        }
    }

    #[test]
    fn steer_single_examples() {
        let w = steer_single(geom(32), dir(0.0));
        assert_cm_unit(&w);
        assert!((beam_gain(&w, dir(0.0)) - 32.0).abs() < 1e-9);
        assert!(beam_gain(&w, dir(2.0 / 32.0)) < 1e-20);
        let w1 = steer_single(geom(1), dir(0.4));
        assert!((w1.weights()[0].norm() - 1.0).abs() < 1e-12);
        assert!((beam_gain(&w1, dir(-0.9)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wide_beam_narrowest_is_steering() {
        let g = geom(32);
        assert_eq!(wide_beam(g, dir(0.2), 2.0 / 32.0).unwrap(), steer_single(g, dir(0.2)));
        assert!(wide_beam(g, dir(0.0), 1.0 / 32.0).is_err());
        assert!(wide_beam(g, dir(0.0), 2.5).is_err());
    }

    fn in_beam_gains(awv: &Awv, center: f64, width: f64) -> Vec<f64> {
        (0..=2000)
            .map(|i| center - width / 2.0 + width * i as f64 / 2000.0)
            .filter(|p| (-1.0..=1.0).contains(p))
            .map(|p| beam_gain(awv, dir(p)))
            .collect()
    }

    #[test]
    fn wide_beam_meets_half_ideal_floor() {
        let g = geom(32);
        for (center, width) in [(0.0, 8.0 / 32.0), (0.3, 8.0 / 32.0), (-0.2, 16.0 / 32.0)] {
            let w = wide_beam(g, dir(center), width).unwrap();
            assert_cm_unit(&w);
            let min = in_beam_gains(&w, center, width).into_iter().fold(f64::INFINITY, f64::min);
            assert!(min >= 0.5 * 2.0 / width, "center {center} width {width}: min {min}");
        }
    }

    #[test]
    fn full_width_beam_is_near_isotropic() {
        let w = wide_beam(geom(32), dir(0.0), 2.0).unwrap();
        for (_, g) in pattern(&w, 2001).unwrap() {
            assert!((0.5..=2.0).contains(&g), "gain {g}");
        }
    }

    #[test]
    fn subarray_single_target_is_steering() {
        let g = geom(16);
        let r = subarray_multibeam(g, &[BeamTarget::new(dir(0.3), 16.0)], None).unwrap();
        assert_eq!(r.awv, steer_single(g, dir(0.3)));
        assert!((r.achieved_gains[0] - 16.0).abs() < 1e-9);
    }

    #[test]
    fn subarray_symmetric_pair() {
        let g = geom(32);
        let targets = [BeamTarget::new(dir(-0.5), 8.0), BeamTarget::new(dir(0.5), 8.0)];
        let r = subarray_multibeam(g, &targets, Some(&[16, 16])).unwrap();
        assert_cm_unit(&r.awv);
        assert_gains_consistent(&r);
        for gain in &r.achieved_gains {
            assert!((gain - 8.0).abs() <= 0.15 * 8.0, "gain {gain}");
        }
    }

    #[test]
    fn subarray_close_targets_report_shortfall_honestly() {
        let g = geom(32);
        let targets = [BeamTarget::new(dir(0.0), 16.0), BeamTarget::new(dir(0.02), 16.0)];
        let r = subarray_multibeam(g, &targets, None).unwrap();
        assert_gains_consistent(&r);
        assert!((r.min_ratio() - min_ratio(&targets, &r.achieved_gains)).abs() < 1e-15);
    }

    #[test]
    fn subarray_rejects_bad_input() {
        let g = geom(2);
        let t = |p| BeamTarget::new(dir(p), 1.0);
        assert!(subarray_multibeam(g, &[], None).is_err());
        assert!(subarray_multibeam(g, &[t(0.0), t(0.5), t(-0.5)], None).is_err());
        assert!(subarray_multibeam(geom(8), &[t(0.0), t(0.5)], Some(&[3, 3])).is_err());
        assert!(subarray_multibeam(geom(8), &[t(0.0), t(0.0)], None).is_err());
    }

    #[test]
    fn default_sizes_follow_amplitudes() {
        let t = |g| BeamTarget::new(dir(0.0), g);
        assert_eq!(default_subarray_sizes(32, &[t(16.0), t(16.0)]), vec![16, 16]);
        assert_eq!(default_subarray_sizes(32, &[t(9.0), t(1.0)]), vec![24, 8]);
        let s = default_subarray_sizes(10, &[t(100.0), t(0.0), t(0.0)]);
        assert_eq!(s.iter().sum::<usize>(), 10);
        assert!(s.iter().all(|&x| x >= 1));
    }

    #[test]
    fn subarray_gain_width_budget() {
        let g = geom(32);
        for (a, b) in [(-0.5, 0.5), (-0.3, 0.4), (0.1, 0.7)] {
            let targets = [BeamTarget::new(dir(a), 8.0), BeamTarget::new(dir(b), 8.0)];
            let r = subarray_multibeam(g, &targets, None).unwrap();
            let budget: f64 = targets
                .iter()
                .map(|t| beam_gain(&r.awv, t.direction) * half_power_width(&r.awv, t.direction, 1e-4))
                .sum();
            assert!((1.5..=2.5).contains(&budget), "budget {budget}");
        }
    }

    #[test]
    fn max_weight_solver_single_constraint() {
        // min alpha s.t. Re(a^H w) >= b: alpha = b/N, w = alpha * a
        let n = 8;
        let a: Vec<Complex64> = (0..n).map(|i| steering_entry(i, 0.3)).collect();
        let sol = solve_max_weight(std::slice::from_ref(&a), &[2.0]).unwrap();
        assert!((sol.alpha - 0.25).abs() < 1e-9);
        for (w, x) in sol.weights.iter().zip(&a) {
            assert!((w - x * 0.25).norm() < 1e-9);
        }
    }

    #[test]
    fn max_weight_solver_closes_duality_gap() {
        let n = 12;
        let rows: Vec<Vec<Complex64>> =
            [-0.4, 0.1, 0.55].iter().map(|&p| (0..n).map(|i| steering_entry(i, p)).collect()).collect();
        let rhs = [1.0, 2.0, 1.5];
        let sol = solve_max_weight(&rows, &rhs).unwrap();
        assert!(sol.alpha - sol.lower_bound <= 1e-6 * sol.lower_bound);
        for (row, b) in rows.iter().zip(rhs) {
            let re: f64 = row.iter().zip(&sol.weights).map(|(c, w)| (c.conj() * w).re).sum();
            assert!(re >= b - 1e-9);
        }
        assert!(sol.weights.iter().all(|w| w.norm() <= sol.alpha + 1e-12));
    }

    #[test]
    fn cm_single_target_full_gain() {
        let g = geom(16);
        let r = cm_optimize_multibeam(g, &[BeamTarget::new(dir(-0.2), 16.0)], &CmOptions::default()).unwrap();
        assert_cm_unit(&r.awv);
        assert!((r.achieved_gains[0] - 16.0).abs() < 1e-6);
        assert!(!r.shortfall);
    }

    #[test]
    fn cm_two_targets_small_array() {
        let g = geom(8);
        let targets = [BeamTarget::new(dir(-0.6), 2.0), BeamTarget::new(dir(0.6), 2.0)];
        let r = cm_optimize_multibeam(g, &targets, &CmOptions::default()).unwrap();
        assert_cm_unit(&r.awv);
        assert_gains_consistent(&r);
        for gain in &r.achieved_gains {
            assert!(*gain >= 1.8, "gain {gain}");
        }
        for pair in r.alpha_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn cm_rejects_budget_violation() {
        let g = geom(16);
        let targets = [BeamTarget::new(dir(-0.5), 16.0), BeamTarget::new(dir(0.5), 16.0)];
        assert!(matches!(cm_optimize_multibeam(g, &targets, &CmOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn cm_alpha_is_monotone() {
        let g = geom(32);
        for (a, b, c) in [(-0.7, 0.1, 0.5), (-0.2, 0.25, 0.9)] {
            let targets = [BeamTarget::new(dir(a), 10.0), BeamTarget::new(dir(b), 6.0), BeamTarget::new(dir(c), 8.0)];
            let r = cm_optimize_multibeam(g, &targets, &CmOptions::default()).unwrap();
            assert_cm_unit(&r.awv);
            assert_gains_consistent(&r);
            assert_eq!(r.iterations, r.alpha_trace.len());
            for pair in r.alpha_trace.windows(2) {
                assert!(pair[1] <= pair[0], "{:?}", r.alpha_trace);
            }
        }
    }

    #[test]
    fn oracle_small_cases() {
        let r = exhaustive_cm_oracle(geom(2), &[BeamTarget::new(dir(0.0), 2.0)], 4).unwrap();
        let phases = r.awv.phases();
        assert!((phases[0] - phases[1]).abs() < 1e-12);
        assert!((r.achieved_gains[0] - 2.0).abs() < 1e-12);
        assert!(matches!(
            exhaustive_cm_oracle(geom(10), &[BeamTarget::new(dir(0.0), 1.0)], 16),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
        assert!(exhaustive_cm_oracle(geom(11), &[BeamTarget::new(dir(0.0), 1.0)], 2).is_err());
    }

    // brute force without pruning or parallelism
    fn plain_enumeration(n: usize, targets: &[BeamTarget], levels: usize) -> (f64, Vec<usize>) {
        let mut best = (f64::NEG_INFINITY, vec![]);
        let total = levels.pow(n as u32 - 1);
        for code in 0..total {
            let mut tuple = vec![0usize; n];
            let mut c = code;
            for slot in tuple[1..].iter_mut().rev() {
                *slot = c % levels;
                c /= levels;
            }
            let phases: Vec<f64> = tuple.iter().map(|&q| 2.0 * PI * q as f64 / levels as f64).collect();
            let awv = Awv::from_phases(&phases).unwrap();
            let ratio =
                targets.iter().map(|t| beam_gain(&awv, t.direction) / t.target_gain).fold(f64::INFINITY, f64::min);
            if ratio > best.0 + 1e-12 {
                best = (ratio, tuple);
            }
        }
        best
    }

    #[test]
    fn oracle_matches_plain_enumeration() {
        let n = 5;
        let targets = [BeamTarget::new(dir(-0.45), 1.5), BeamTarget::new(dir(0.3), 2.5)];
        let r = exhaustive_cm_oracle(geom(n), &targets, 6).unwrap();
        let (value, tuple) = plain_enumeration(n, &targets, 6);
        assert!((r.min_ratio() - value).abs() < 1e-9);
        let expected: Vec<f64> = tuple.iter().map(|&q| 2.0 * PI * q as f64 / 6.0).collect();
        let got: Vec<f64> = r.awv.phases().iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        for (a, b) in got.iter().zip(&expected) {
            let d = (a - b).rem_euclid(2.0 * PI);
            assert!(d < 1e-9 || 2.0 * PI - d < 1e-9, "{got:?} vs {expected:?}");
        }
    }
}
