//! Idealised flat-top beams: gain `2/B` inside a beam of width `B`, zero
//! outside. This is the abstraction behind the analytic rate sweeps; physical
//! patterns live in [`crate::design`].

use crate::array::{ArrayGeometry, Direction};
use crate::error::{invalid, Result};

const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub center: Direction,
    pub width: f64,
    pub gain: f64,
}

impl BeamSpec {
    pub fn new(center: Direction, width: f64, gain: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return invalid(format!("beam width {width} must be positive"));
        }
        if !(gain >= 0.0 && gain.is_finite()) {
            return invalid(format!("beam gain {gain} must be nonnegative"));
        }
        Ok(Self { center, width, gain })
    }

    /// Single ideal beam of width `width` at its maximal gain `2/width`.
    pub fn ideal(center: Direction, width: f64) -> Result<Self> {
        Self::new(center, width, ideal_gain(width)?)
    }

    pub fn lower(&self) -> f64 {
        self.center.phi() - 0.5 * self.width
    }

    pub fn upper(&self) -> f64 {
        self.center.phi() + 0.5 * self.width
    }

    pub fn contains(&self, phi: f64) -> bool {
        (self.lower()..=self.upper()).contains(&phi)
    }
}

/// Several disjoint ideal beams sharing one gain budget `sum G_i * B_i <= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealMultibeam {
    beams: Vec<BeamSpec>,
}

impl IdealMultibeam {
    /// Rejects overlapping intervals and budget violations. Intervals may
    /// touch at an edge.
    pub fn new(beams: Vec<BeamSpec>) -> Result<Self> {
        for (i, a) in beams.iter().enumerate() {
            for b in &beams[i + 1..] {
                let overlap = a.upper().min(b.upper()) - a.lower().max(b.lower());
                if overlap > BUDGET_TOL {
                    return invalid(format!("beams at {} and {} overlap by {overlap}", a.center.phi(), b.center.phi()));
                }
            }
        }
        let budget: f64 = beams.iter().map(|b| b.gain * b.width).sum();
        if budget > 2.0 + BUDGET_TOL {
            return invalid(format!("gain-width budget {budget} exceeds 2"));
        }
        Ok(Self { beams })
    }

    pub fn beams(&self) -> &[BeamSpec] {
        &self.beams
    }

    pub fn budget(&self) -> f64 {
        self.beams.iter().map(|b| b.gain * b.width).sum()
    }
}

/// Gain of an ideal flat-top beam of width `width`: `2/width`.
pub fn ideal_gain(width: f64) -> Result<f64> {
    if !(width > 0.0 && width.is_finite()) {
        return invalid(format!("beam width {width} must be positive"));
    }
    Ok(2.0 / width)
}

/// Width of a single beam covering every direction, with a `2/N` guard so
/// edge users sit inside the flat top: `span + 2/N`.
pub fn required_width(directions: &[Direction], geom: ArrayGeometry) -> Result<f64> {
    let Some(first) = directions.first() else {
        return invalid("required_width needs at least one direction");
    };
    let (lo, hi) = directions.iter().fold((first.phi(), first.phi()), |(lo, hi), d| (lo.min(d.phi()), hi.max(d.phi())));
    Ok((hi - lo) + geom.min_beam_width())
}

/// Gain seen at `d`; the lowest-indexed beam wins on shared edges.
pub fn ideal_gain_at(mb: &IdealMultibeam, d: Direction) -> f64 {
    mb.beams.iter().find(|b| b.contains(d.phi())).map_or(0.0, |b| b.gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dir(phi: f64) -> Direction {
        Direction::new(phi).unwrap()
    }

    #[test]
    fn ideal_gain_examples() {
        assert_eq!(ideal_gain(2.0 / 32.0).unwrap(), 32.0);
        assert_eq!(ideal_gain(16.0 / 32.0).unwrap(), 4.0);
        assert_eq!(ideal_gain(2.0).unwrap(), 1.0);
        assert!(ideal_gain(0.0).is_err());
        assert!(ideal_gain(-1.0).is_err());
    }

    #[test]
    fn required_width_examples() {
        let g = ArrayGeometry::new(32).unwrap();
        assert_eq!(required_width(&[dir(0.3)], g).unwrap(), 2.0 / 32.0);
        let w = required_width(&[dir(0.1), dir(0.5)], g).unwrap();
        assert!((w - 0.4625).abs() < 1e-15);
        assert_eq!(required_width(&[dir(0.2), dir(0.2)], g).unwrap(), 2.0 / 32.0);
        assert!(required_width(&[], g).is_err());
    }

    #[test]
    fn multibeam_lookup_and_tie_break() {
        let n = 32.0;
        let b1 = BeamSpec::new(dir(0.0), 2.0 / n, 16.0).unwrap();
        let b2 = BeamSpec::new(dir(2.0 / n), 2.0 / n, 8.0).unwrap();
        let mb = IdealMultibeam::new(vec![b1, b2]).unwrap();
        assert_eq!(ideal_gain_at(&mb, dir(0.01)), 16.0);
        assert_eq!(ideal_gain_at(&mb, dir(0.5)), 0.0);
        // shared edge at phi = 1/N
        assert_eq!(ideal_gain_at(&mb, dir(1.0 / n)), 16.0);
    }

    #[test]
    fn multibeam_budget() {
        let n = 32.0;
        let w = 2.0 / n;
        let full = |g| {
            IdealMultibeam::new(vec![BeamSpec::new(dir(-0.5), w, g).unwrap(), BeamSpec::new(dir(0.5), w, g).unwrap()])
        };
        assert!(full(n).is_err());
        assert!(full(n / 2.0).is_ok());
        assert!((full(n / 2.0).unwrap().budget() - 2.0).abs() < 1e-12);
        let overlapping = IdealMultibeam::new(vec![
            BeamSpec::new(dir(0.0), 0.2, 1.0).unwrap(),
            BeamSpec::new(dir(0.1), 0.2, 1.0).unwrap(),
        ]);
        assert!(overlapping.is_err());
    }

    proptest! {
        #[test]
        fn gain_width_product_is_two(width in 1e-6f64..2.0) {
            prop_assert!((ideal_gain(width).unwrap() * width - 2.0).abs() < 1e-12);
        }

        #[test]
        fn required_width_is_permutation_invariant(
            mut phis in proptest::collection::vec(-1.0f64..1.0, 1..8),
            extra in 0.0f64..0.5,
        ) {
            let g = ArrayGeometry::new(16).unwrap();
            let dirs: Vec<Direction> = phis.iter().map(|&p| dir(p)).collect();
            let w = required_width(&dirs, g).unwrap();
            phis.reverse();
            let rev: Vec<Direction> = phis.iter().map(|&p| dir(p)).collect();
            prop_assert_eq!(w, required_width(&rev, g).unwrap());
            prop_assert!(w >= 2.0 / 16.0);

            // pushing the extreme user outward never narrows the beam
            let hi = phis.iter().cloned().fold(f64::MIN, f64::max);
            let mut wider = dirs.clone();
            wider.push(Direction::saturating(hi + extra));
            prop_assert!(required_width(&wider, g).unwrap() >= w);
        }
    }
}
