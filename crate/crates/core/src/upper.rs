//! Upward-biased pathwise recursions.
//!
//! Each function walks one [`PathInput`] backward and returns the whole
//! trajectory `θ_0, …, θ_n`; the estimator uses `θ_0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Driver, Envelope, Side};
use crate::inputs::{InnerMode, PathInput};
use crate::lower::{controls_along_path, Controls};
use crate::solve::{self, piecewise_fixed_point, PicardTrace};

/// How the implicit equation in `θ^up_i` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualSolver {
    Picard,
    /// Maximisation over the finite candidate set of conjugate arguments `r`.
    Conjugate,
}

/// `θ^up` for a convex driver:
/// `θ_i = max{S_i, θ_{i+1} − ΔM^0 + f(θ_i, β θ_{i+1} − ΔM) Δ}`, `θ_n = S_n`.
pub fn theta_up_convex(
    driver: &Driver,
    input: &PathInput,
    mode: InnerMode,
    solver: DualSolver,
) -> Result<Vec<f64>> {
    theta_up_convex_traced(driver, input, mode, solver, |_, _| {})
}

/// As [`theta_up_convex`], passing every Picard trace to `audit`.
pub fn theta_up_convex_traced(
    driver: &Driver,
    input: &PathInput,
    mode: InnerMode,
    solver: DualSolver,
    mut audit: impl FnMut(usize, &PicardTrace),
) -> Result<Vec<f64>> {
    let n = input.len();
    let zd = driver.z_dim();
    let candidates = match solver {
        DualSolver::Conjugate => driver.candidate_r_set()?,
        DualSolver::Picard => Vec::new(),
    };
    let mut theta = vec![0.0; n + 1];
    theta[n] = input.terminal;
    let mut w = vec![0.0; zd];
    for i in (0..n).rev() {
        let s = &input.steps[i];
        let next = theta[i + 1];
        let a = next - s.dm0(mode);
        for d in 0..zd {
            w[d] = s.beta[d] * next - s.dm(mode, d);
        }
        let cont = match solver {
            DualSolver::Picard => {
                let trace = driver.solve_implicit(i, a, &w, s.delta)?;
                audit(i, &trace);
                trace.value
            }
            DualSolver::Conjugate => {
                let mut best = f64::NEG_INFINITY;
                for &r in &candidates {
                    let v = (a - driver.conjugate_y(r, &w)? * s.delta) / (1.0 - r * s.delta);
                    best = best.max(v);
                }
                best
            }
        };
        theta[i] = s.barrier.reflect(cont);
    }
    Ok(theta)
}

/// Shared backward pass of the envelope recursions. `reflect` applies the
/// barrier (upper side); `stop` truncates the path at `τ` (lower side).
pub(crate) fn envelope_pass(
    driver: &Driver,
    env: &Envelope,
    input: &PathInput,
    mode: InnerMode,
    stop: usize,
    reflect: bool,
) -> Result<Vec<f64>> {
    let zd = driver.z_dim();
    let mut theta = vec![f64::NAN; input.len() + 1];
    theta[stop] = input.barrier(stop).value().ok_or_else(|| {
        Error::Invariant(format!("stopping at {stop}, which is not an exercise date"))
    })?;
    let mut w = vec![0.0; zd];
    for i in (0..stop).rev() {
        let s = &input.steps[i];
        let next = theta[i + 1];
        for d in 0..zd {
            w[d] = s.z[d] - s.beta[d] * next + s.dm(mode, d);
        }
        let u = next - s.dm0(mode) + driver.eval(s.y, &s.z) * s.delta;
        let cont = match env.y_pieces(driver, &w) {
            Some((pieces, fold)) => {
                let shifted: Vec<(f64, f64)> =
                    pieces.iter().map(|&(sl, c)| (-sl, sl * s.y + c)).collect();
                piecewise_fixed_point(u, s.delta, &shifted, fold)
            }
            None => {
                let start = u + env.eval(driver, s.y, &s.z, 0.0, &w) * s.delta;
                solve::picard(i, start, |t| {
                    u + env.eval(driver, s.y, &s.z, s.y - t, &w) * s.delta
                })?
                .value
            }
        };
        theta[i] = if reflect {
            s.barrier.reflect(cont)
        } else {
            cont
        };
    }
    Ok(theta)
}

/// `Θ^{h^up}` for an upper envelope: the convex dual applied to the
/// dominating generator `f(ỹ, z̃) + h^up(ỹ, z̃; ỹ − y, z̃ − z)`.
pub fn theta_up_h(
    driver: &Driver,
    env: &Envelope,
    input: &PathInput,
    mode: InnerMode,
) -> Result<Vec<f64>> {
    if env.side() != Side::Up {
        return Err(Error::ShapeMismatch {
            required: "upper envelope",
            actual: "lower envelope",
        });
    }
    envelope_pass(driver, env, input, mode, input.len(), true)
}

/// `ϑ^up` for a concave driver:
/// `max_k Γ_{0,k}(−r,−ρ) S_k + Σ_{j<k} Γ_{0,j}(−r,−ρ)(−f)^#_j Δ_j/(1 + r_j Δ_j) − M^0_k`
/// with `(r, ρ)` subgradients of `−f` at the fitted triple and `M^0` the
/// surrogate Doob martingale of `Γ(−r,−ρ) ỹ`.
pub fn vartheta_up_concave(driver: &Driver, input: &PathInput, mode: InnerMode) -> Result<f64> {
    let ctrl = controls_along_path(driver, input, true)?;
    vartheta_up_with(input, &ctrl, mode)
}

/// [`vartheta_up_concave`] for given controls of `−f`.
pub fn vartheta_up_with(input: &PathInput, ctrl: &Controls, mode: InnerMode) -> Result<f64> {
    let n = input.len();
    let mut gamma = 1.0;
    let mut acc = 0.0;
    let mut mart = 0.0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=n {
        if let Some(sk) = input.barrier(k).value() {
            best = best.max(gamma * sk + acc - mart);
        }
        if k == n {
            break;
        }
        let s = &input.steps[k];
        let (r, rho, conj) = (ctrl.r[k], &ctrl.rho[k], ctrl.conj[k]);
        let denom = 1.0 + r * s.delta;
        if !(denom > 0.0) {
            return Err(Error::Invariant(format!("1 + r Δ = {denom} at step {k}")));
        }
        acc += gamma * conj * s.delta / denom;
        let rho_dm: f64 = rho.iter().enumerate().map(|(d, v)| v * s.dm(mode, d)).sum();
        mart += gamma * (s.dm0(mode) - s.delta * rho_dm) / denom;
        let rho_beta: f64 = rho.iter().zip(&s.beta).map(|(a, b)| a * b).sum();
        gamma *= (1.0 - rho_beta * s.delta) / denom;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Sample mean and standard error (divisor `Λ − 1`).
pub fn estimate(samples: &[f64]) -> Result<Estimate> {
    let count = samples.len();
    if count < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            actual: count,
        });
    }
    let mean = samples.iter().sum::<f64>() / count as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64;
    Ok(Estimate {
        mean,
        stderr: (var / count as f64).sqrt(),
        count,
    })
}

/// Upper estimator statistics from per-path `θ^up_0` samples.
pub fn estimate_upper(samples: &[f64]) -> Result<Estimate> {
    estimate(samples)
}
