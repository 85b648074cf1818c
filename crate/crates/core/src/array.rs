//! Half-wavelength uniform linear array: steering vectors, beam gains,
//! patterns and single-path user channels.
//!
//! Directions live in the cosine-angle domain, `phi = cos(theta)` in
//! `[-1, 1]`. With half-wavelength spacing the steering vector entry for
//! antenna `n` is `exp(j*pi*n*phi)`, so a steered array of `N` elements has
//! its first null exactly `2/N` away from the beam centre.
//!
//! Gains are power gains `|w^H a(phi)|^2` of a unit-norm weight vector, so a
//! coherently steered array peaks at `N` and every unit-norm AWV integrates to
//! one over the domain: `(1/2) * integral_{-1}^{1} G(phi) dphi = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Tolerance used for unit-norm and constant-modulus checks.
pub const NORM_TOL: f64 = 1e-9;

/// A direction in the cosine-angle domain.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Direction(f64);

impl Direction {
    pub fn new(phi: f64) -> Result<Self> {
        if phi.is_finite() && (-1.0..=1.0).contains(&phi) {
            Ok(Self(phi))
        } else {
            Err(Error::InvalidDirection(phi))
        }
    }

    /// Clamps into `[-1, 1]`. Non-finite input maps to broadside.
    pub fn saturating(phi: f64) -> Self {
        if phi.is_finite() {
            Self(phi.clamp(-1.0, 1.0))
        } else {
            Self(0.0)
        }
    }

    pub fn phi(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Direction {
    type Error = Error;

    fn try_from(phi: f64) -> Result<Self> {
        Self::new(phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    n_antennas: usize,
}

impl ArrayGeometry {
    pub fn new(n_antennas: usize) -> Result<Self> {
        if n_antennas == 0 {
            return invalid("array needs at least one antenna");
        }
        Ok(Self { n_antennas })
    }

    pub fn n_antennas(self) -> usize {
        self.n_antennas
    }

    /// Narrowest achievable beam width `2/N` in the cosine-angle domain.
    pub fn min_beam_width(self) -> f64 {
        2.0 / self.n_antennas as f64
    }
}

/// Antenna weight vector, always normalised to unit total power.
#[derive(Debug, Clone, PartialEq)]
pub struct Awv {
    weights: Vec<Complex64>,
    cm: bool,
}

impl Awv {
    /// Normalises `weights` to unit norm. The CM flag is set when every
    /// normalised weight has magnitude `1/sqrt(N)`.
    pub fn from_weights(weights: Vec<Complex64>) -> Result<Self> {
        if weights.is_empty() {
            return invalid("empty weight vector");
        }
        if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return invalid("non-finite antenna weight");
        }
        let norm = weights.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        if norm <= f64::MIN_POSITIVE {
            return invalid("zero weight vector");
        }
        let weights: Vec<Complex64> = weights.into_iter().map(|w| w / norm).collect();
        let modulus = 1.0 / (weights.len() as f64).sqrt();
        let cm = weights.iter().all(|w| (w.norm() - modulus).abs() <= NORM_TOL);
        Ok(Self { weights, cm })
    }

    /// Constant-modulus AWV with weights `exp(j*phase_n)/sqrt(N)`.
    pub fn from_phases(phases: &[f64]) -> Result<Self> {
        if phases.is_empty() {
            return invalid("empty phase vector");
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return invalid("non-finite phase");
        }
        let scale = 1.0 / (phases.len() as f64).sqrt();
        Ok(Self { weights: phases.iter().map(|&p| Complex64::from_polar(scale, p)).collect(), cm: true })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_cm(&self) -> bool {
        self.cm
    }

    /// Phases in `(-pi, pi]`.
    pub fn phases(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.arg()).collect()
    }

    /// Keeps every phase and forces every magnitude to `1/sqrt(N)`.
    /// Exactly-zero weights take phase zero.
    pub fn project_cm(&self) -> Awv {
        let phases: Vec<f64> = self.weights.iter().map(|w| w.arg()).collect();
        Awv::from_phases(&phases).expect("phases of a finite vector are finite")
    }

    pub fn norm_sqr(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_sqr()).sum()
    }
}

/// How [`sample_channel`] draws the complex path gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingMode {
    /// `|g|^2` equals the average power exactly; only the phase is random.
    #[default]
    Deterministic,
    /// Circularly-symmetric complex Gaussian with `E|g|^2` equal to the average power.
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSpec {
    pub user_id: u32,
    pub direction: Direction,
    /// Linear average channel power `E|g|^2`.
    pub avg_power: f64,
    pub fading: FadingMode,
}

/// A user's single-path channel `g * a(phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub user_id: u32,
    pub direction: Direction,
    pub gain: Complex64,
    pub avg_power: f64,
}

impl ChannelState {
    /// Channel with a real positive gain of power `avg_power`.
    pub fn deterministic(user_id: u32, direction: Direction, avg_power: f64) -> Result<Self> {
        if !(avg_power >= 0.0 && avg_power.is_finite()) {
            return invalid(format!("average power {avg_power} must be finite and nonnegative"));
        }
        Ok(Self { user_id, direction, gain: Complex64::new(avg_power.sqrt(), 0.0), avg_power })
    }

    /// Instantaneous channel power `|g|^2`.
    pub fn power(&self) -> f64 {
        self.gain.norm_sqr()
    }
}

/// Steering vector `a(phi)` with entries `exp(j*pi*n*phi)`.
pub fn steering_vector(geom: ArrayGeometry, d: Direction) -> Vec<Complex64> {
    (0..geom.n_antennas()).map(|n| steering_entry(n, d.phi())).collect()
}

#[inline]
pub(crate) fn steering_entry(n: usize, phi: f64) -> Complex64 {
    Complex64::from_polar(1.0, PI * n as f64 * phi)
}

/// Complex array response `w^H a(phi)`.
pub fn array_response(w: &Awv, d: Direction) -> Complex64 {
    response_at(w.weights(), d.phi())
}

pub(crate) fn response_at(weights: &[Complex64], phi: f64) -> Complex64 {
    weights.iter().enumerate().map(|(n, w)| w.conj() * steering_entry(n, phi)).sum()
}

/// Power gain `|w^H a(phi)|^2`.
pub fn beam_gain(w: &Awv, d: Direction) -> f64 {
    array_response(w, d).norm_sqr()
}

/// Uniform grid of `grid_size` points over `[-1, 1]`, endpoints included.
pub fn direction_grid(grid_size: usize) -> Result<Vec<f64>> {
    linspace(-1.0, 1.0, grid_size)
}

pub(crate) fn linspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    match points {
        0 | 1 => invalid(format!("grid needs at least 2 points, got {points}")),
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            Ok((0..points).map(|k| if k == points - 1 { hi } else { lo + step * k as f64 }).collect())
        }
    }
}

/// Beam pattern sampled on a uniform grid, ordered by ascending `phi`.
pub fn pattern(w: &Awv, grid_size: usize) -> Result<Vec<(f64, f64)>> {
    Ok(direction_grid(grid_size)?.into_iter().map(|phi| (phi, response_at(w.weights(), phi).norm_sqr())).collect())
}

/// Trapezoidal estimate of `(1/2) * integral_{-1}^{1} G(phi) dphi`.
///
/// `G` is a trigonometric polynomial of period 2 in `phi`, so the trapezoid
/// rule is exact (up to rounding) once `grid_size - 1 >= N`.
pub fn gain_integral(w: &Awv, grid_size: usize) -> Result<f64> {
    let pat = pattern(w, grid_size)?;
    let h = 2.0 / (grid_size - 1) as f64;
    let inner: f64 = pat.iter().map(|&(_, g)| g).sum();
    let ends = 0.5 * (pat[0].1 + pat[pat.len() - 1].1);
    Ok(0.5 * h * (inner - ends))
}

/// Draws a user's path gain. The stream is keyed by `(seed, user_id)` so
/// users drawn with the same seed are independent and reproducible.
pub fn sample_channel(spec: &UserSpec, seed: u64) -> Result<ChannelState> {
    if !(spec.avg_power >= 0.0 && spec.avg_power.is_finite()) {
        return invalid(format!(
            "average power {} of user {} must be finite and nonnegative",
            spec.avg_power, spec.user_id
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(spec.user_id));
    let gain = match spec.fading {
        FadingMode::Deterministic => {
            let phase = rng.random_range(0.0..2.0 * PI);
            Complex64::from_polar(spec.avg_power.sqrt(), phase)
        }
        FadingMode::Rayleigh => {
            let sigma = (spec.avg_power / 2.0).sqrt();
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(sigma * re, sigma * im)
        }
    };
    Ok(ChannelState { user_id: spec.user_id, direction: spec.direction, gain, avg_power: spec.avg_power })
}
