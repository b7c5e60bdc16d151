//! Scalar fixed-point solvers for the implicit one-step equations
//! `θ = u + Δ·g(θ)` that appear in every backward recursion.

use crate::error::{Error, Result};

pub const PICARD_TOL: f64 = 1e-12;
pub const PICARD_CAP: usize = 50;

/// Outcome of a Picard iteration, with the successive step sizes kept for
/// contraction audits.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardTrace {
    pub value: f64,
    pub steps: Vec<f64>,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }
}

/// Iterates `θ ← map(θ)` from `start` until two iterates differ by at most
/// `PICARD_TOL` (relative to `max(1, |θ|)`).
pub fn picard(step: usize, start: f64, map: impl Fn(f64) -> f64) -> Result<PicardTrace> {
    let mut theta = start;
    let mut steps = Vec::new();
    for _ in 0..PICARD_CAP {
        let next = map(theta);
        let change = (next - theta).abs();
        steps.push(change);
        theta = next;
        if !change.is_finite() {
            break;
        }
        if change <= PICARD_TOL * theta.abs().max(1.0) {
            return Ok(PicardTrace {
                value: theta,
                steps,
            });
        }
    }
    Err(Error::NoConvergence {
        step,
        iterations: steps.len(),
        last_change: steps.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    /// `g = max_k` of the affine pieces (convex).
    Max,
    /// `g = min_k` of the affine pieces (concave).
    Min,
}

/// Exact solution of `θ = u + Δ·g(θ)` for `g(θ) = max_k / min_k (a_k θ + b_k)`
/// with every `|a_k| Δ < 1`.
///
/// Each piece has the fixed point `θ_k = (u + Δ b_k)/(1 − a_k Δ)`; the solution
/// is the largest of them for a convex `g` and the smallest for a concave one.
pub fn piecewise_fixed_point(u: f64, delta: f64, pieces: &[(f64, f64)], envelope: Envelope) -> f64 {
    debug_assert!(!pieces.is_empty());
    let candidates = pieces
        .iter()
        .map(|&(a, b)| (u + delta * b) / (1.0 - a * delta));
    match envelope {
        Envelope::Max => candidates.fold(f64::NEG_INFINITY, f64::max),
        Envelope::Min => candidates.fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn picard_linear_map() {
        let t = picard(0, 0.0, |x| 1.0 + 0.5 * x).unwrap();
        assert_relative_eq!(t.value, 2.0, epsilon = 1e-11);
        for w in t.steps.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-15);
        }
    }

    #[test]
    fn picard_reports_divergence() {
        let err = picard(3, 1.0, |x| 2.0 * x).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { step: 3, .. }));
    }

    #[test]
    fn piecewise_matches_picard() {
        let pieces = [(-0.06, 0.3), (-0.01, -0.2), (0.04, 0.05)];
        for &env in &[Envelope::Max, Envelope::Min] {
            let g = |x: f64| {
                let v = pieces.iter().map(|&(a, b)| a * x + b);
                match env {
                    Envelope::Max => v.fold(f64::NEG_INFINITY, f64::max),
                    Envelope::Min => v.fold(f64::INFINITY, f64::min),
                }
            };
            for &u in &[-3.0, 0.0, 2.5, 100.0] {
                let exact = piecewise_fixed_point(u, 0.5, &pieces, env);
                let iter = picard(0, u, |x| u + 0.5 * g(x)).unwrap().value;
                assert_relative_eq!(exact, iter, epsilon = 1e-10);
            }
        }
    }
}
