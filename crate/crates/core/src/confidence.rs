//! The 95% interval `[Ŷ^low − 1.96 σ̂_low/√Λ, Ŷ^up + 1.96 σ̂_up/√Λ]`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::upper::estimate;

pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub mean_low: f64,
    pub mean_up: f64,
    pub se_low: f64,
    pub se_up: f64,
    pub lambda_out: usize,
    pub lambda_in: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// `(Ŷ^up − Ŷ^low) / Ŷ^low`.
    pub fn relative_gap(&self) -> f64 {
        (self.mean_up - self.mean_low) / self.mean_low.abs()
    }
}

/// Interval with multiplier [`Z95`].
pub fn ci95(low: &[f64], up: &[f64], lambda_in: usize) -> Result<ConfidenceInterval> {
    ci_with(low, up, lambda_in, Z95)
}

pub fn ci_with(low: &[f64], up: &[f64], lambda_in: usize, z: f64) -> Result<ConfidenceInterval> {
    let l = estimate(low)?;
    let u = estimate(up)?;
    Ok(ConfidenceInterval {
        lo: l.mean - z * l.stderr,
        hi: u.mean + z * u.stderr,
        mean_low: l.mean,
        mean_up: u.mean,
        se_low: l.stderr,
        se_up: u.stderr,
        lambda_out: l.count.max(u.count),
        lambda_in,
    })
}
