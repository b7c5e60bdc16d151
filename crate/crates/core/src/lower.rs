//! Downward-biased pathwise recursions: a stopping time plugged into a
//! linearised or envelope-dominated dynamic.

use crate::error::{Error, Result};
use crate::generator::{Driver, Envelope, Shape, Side};
use crate::inputs::{InnerMode, PathInput};
use crate::upper::{envelope_pass, estimate, Estimate};

/// Linearisation controls along one path: `r_j`, `ρ_j` and the conjugate
/// value at `(r_j, ρ_j)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Controls {
    pub r: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub conj: Vec<f64>,
}

/// Controls at the fitted triples `(ỹ_j, z̃_j)`.
///
/// With `negated` false these are subgradients of a convex `f` (branch
/// slopes for a general driver); with `negated` true they are subgradients
/// of `−f` for a concave driver.
pub fn controls_along_path(driver: &Driver, input: &PathInput, negated: bool) -> Result<Controls> {
    let n = input.len();
    let mut c = Controls {
        r: Vec::with_capacity(n),
        rho: Vec::with_capacity(n),
        conj: Vec::with_capacity(n),
    };
    for s in &input.steps {
        let g = if negated {
            driver.neg_subgradient(s.y, &s.z)?
        } else {
            match driver.shape() {
                Shape::Affine | Shape::Convex => driver.subgradient(s.y, &s.z)?,
                Shape::General => driver.local_slope(s.y, &s.z),
                Shape::Concave => {
                    return Err(Error::ShapeMismatch {
                        required: "convex or general",
                        actual: "concave",
                    })
                }
            }
        };
        c.r.push(g.r);
        c.rho.push(g.rho);
        c.conj.push(g.conj);
    }
    Ok(c)
}

/// `τ̃ = min{ j : S_j ≥ q̃_j + f(ỹ_j, z̃_j) Δ_j }`, or `n`.
pub fn stopping_time(driver: &Driver, input: &PathInput) -> usize {
    input
        .steps
        .iter()
        .position(|s| s.barrier.at_least(s.q + driver.eval(s.y, &s.z) * s.delta))
        .unwrap_or(input.len())
}

/// `Γ_{0,j}` for `j = 0, …, n` with one-step factor `(1 + ρᵀβΔ)/(1 − rΔ)`.
pub fn gamma_factors(input: &PathInput, ctrl: &Controls) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(input.len() + 1);
    let mut g = 1.0;
    out.push(g);
    for (j, s) in input.steps.iter().enumerate() {
        g *= step_factor(s.delta, ctrl.r[j], &ctrl.rho[j], &s.beta, j)?;
        out.push(g);
    }
    Ok(out)
}

fn step_factor(delta: f64, r: f64, rho: &[f64], beta: &[f64], j: usize) -> Result<f64> {
    let denom = 1.0 - r * delta;
    if !(denom > 0.0) {
        return Err(Error::Invariant(format!("1 − r Δ = {denom} at step {j}")));
    }
    let rb: f64 = rho.iter().zip(beta).map(|(a, b)| a * b).sum();
    Ok((1.0 + rb * delta) / denom)
}

/// `θ^low(τ, r, ρ) = Γ_{0,τ} S_τ − Σ_{j<τ} Γ_{0,j} f^#_j Δ_j/(1 − r_j Δ_j)`.
///
/// With `cv` set, the martingale built from the inner estimates of that
/// mode is subtracted as a control variate.
pub fn theta_low_convex(
    input: &PathInput,
    tau: usize,
    ctrl: &Controls,
    cv: Option<InnerMode>,
) -> Result<f64> {
    let s_tau = input.barrier(tau).value().ok_or_else(|| {
        Error::Invariant(format!("stopping at {tau}, which is not an exercise date"))
    })?;
    let mut g = 1.0;
    let mut acc = 0.0;
    for j in 0..tau {
        let s = &input.steps[j];
        let (r, rho) = (ctrl.r[j], &ctrl.rho[j]);
        let denom = 1.0 - r * s.delta;
        acc -= g * ctrl.conj[j] * s.delta / denom;
        if let Some(mode) = cv {
            let rho_dm: f64 = rho.iter().enumerate().map(|(d, v)| v * s.dm(mode, d)).sum();
            acc -= g * (s.dm0(mode) + s.delta * rho_dm) / denom;
        }
        g *= step_factor(s.delta, r, rho, &s.beta, j)?;
    }
    Ok(g * s_tau + acc)
}

/// `θ^low` for a convex (or general) driver with controls at the fitted
/// triple and the stopping time [`stopping_time`].
pub fn theta_low(driver: &Driver, input: &PathInput, cv: Option<InnerMode>) -> Result<f64> {
    let ctrl = controls_along_path(driver, input, false)?;
    theta_low_convex(input, stopping_time(driver, input), &ctrl, cv)
}

/// `Θ^{h^low}`: no reflection, stopped at `τ`.
pub fn theta_low_h(
    driver: &Driver,
    env: &Envelope,
    input: &PathInput,
    mode: InnerMode,
    tau: usize,
) -> Result<Vec<f64>> {
    if env.side() != Side::Low {
        return Err(Error::ShapeMismatch {
            required: "lower envelope",
            actual: "upper envelope",
        });
    }
    envelope_pass(driver, env, input, mode, tau, false)
}

/// `ϑ^low` for a concave driver:
/// `ϑ_j = ϑ_{j+1} − ΔM^0 + f(ϑ_j, β ϑ_{j+1} − ΔM) Δ` for `j < τ`, `ϑ_τ = S_τ`.
pub fn vartheta_low_concave(
    driver: &Driver,
    input: &PathInput,
    mode: InnerMode,
    tau: usize,
) -> Result<Vec<f64>> {
    let zd = driver.z_dim();
    let mut theta = vec![f64::NAN; input.len() + 1];
    theta[tau] = input.barrier(tau).value().ok_or_else(|| {
        Error::Invariant(format!("stopping at {tau}, which is not an exercise date"))
    })?;
    let mut w = vec![0.0; zd];
    for j in (0..tau).rev() {
        let s = &input.steps[j];
        let next = theta[j + 1];
        for d in 0..zd {
            w[d] = s.beta[d] * next - s.dm(mode, d);
        }
        theta[j] = driver.fixed_point(j, next - s.dm0(mode), &w, s.delta)?;
    }
    Ok(theta)
}

/// Lower estimator statistics from per-path samples.
pub fn estimate_lower(samples: &[f64]) -> Result<Estimate> {
    estimate(samples)
}
