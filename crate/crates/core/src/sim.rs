//! Time grid, multi-asset geometric Brownian motion, and the truncated
//! Brownian weights `β`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::normal;
use crate::rng::{stream, StreamRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    deltas: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid `t_i = T i / n` with constant step `T / n`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid(
                "horizon",
                format!("must be positive, got {horizon}"),
            ));
        }
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        let delta = horizon / steps as f64;
        let times = (0..=steps)
            .map(|i| horizon * i as f64 / steps as f64)
            .collect();
        Ok(Self {
            times,
            deltas: vec![delta; steps],
        })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("times", "need at least two instants"));
        }
        let deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        if deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(invalid("times", "must be strictly increasing"));
        }
        Ok(Self { times, deltas })
    }

    pub fn steps(&self) -> usize {
        self.deltas.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn delta(&self, i: usize) -> f64 {
        self.deltas[i]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// `D` independent, identically distributed geometric Brownian motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub x0: Vec<f64>,
    pub drift: f64,
    pub vol: f64,
}

impl GbmModel {
    pub fn new(x0: Vec<f64>, drift: f64, vol: f64) -> Result<Self> {
        if x0.is_empty() {
            return Err(invalid("x0", "need at least one asset"));
        }
        if x0.iter().any(|x| !(*x > 0.0)) {
            return Err(invalid("x0", "initial prices must be positive"));
        }
        if !(vol >= 0.0) || !vol.is_finite() {
            return Err(invalid("vol", format!("must be non-negative, got {vol}")));
        }
        Ok(Self { x0, drift, vol })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// One-step transition of a single coordinate driven by the increment `dw`.
    #[inline]
    pub fn step(&self, x: f64, delta: f64, dw: f64) -> f64 {
        x * ((self.drift - 0.5 * self.vol * self.vol) * delta + self.vol * dw).exp()
    }
}

/// Per-step truncation levels `c_i` for the weights; `f64::INFINITY` means
/// no clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    levels: Vec<f64>,
}

impl Truncation {
    pub fn none(steps: usize) -> Self {
        Self {
            levels: vec![f64::INFINITY; steps],
        }
    }

    pub fn uniform(level: f64, steps: usize) -> Result<Self> {
        if !(level > 0.0) {
            return Err(invalid(
                "truncation",
                format!("level must be positive, got {level}"),
            ));
        }
        Ok(Self {
            levels: vec![level; steps],
        })
    }

    /// `c_i = 1 / (D · max_d α^{(d)}_i · Δ_i)`, which makes
    /// `Σ_d α^{(d)}_i |β_{d,i+1}| ≤ 1/Δ_i` hold on every path.
    pub fn from_lipschitz(grid: &TimeGrid, dim: usize, max_alpha_z: impl Fn(usize) -> f64) -> Self {
        let levels = (0..grid.steps())
            .map(|i| {
                let a = max_alpha_z(i);
                if a > 0.0 && dim > 0 {
                    1.0 / (dim as f64 * a * grid.delta(i))
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Self { levels }
    }

    pub fn level(&self, i: usize) -> f64 {
        self.levels[i]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

/// `β_d = clamp(dw_d / Δ, -c, c)`.
pub fn truncated_weights(dw: &[f64], delta: f64, level: f64) -> Vec<f64> {
    dw.iter()
        .map(|w| truncated_weight(*w, delta, level))
        .collect()
}

#[inline]
pub fn truncated_weight(dw: f64, delta: f64, level: f64) -> f64 {
    (dw / delta).clamp(-level, level)
}

/// First and second moments of the truncated weights over one step.
///
/// The coordinates are independent and symmetric, so the mean vanishes and the
/// second-moment matrix `B` is diagonal; only its diagonal is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMoments {
    pub mean: Vec<f64>,
    pub second_diag: Vec<f64>,
    pub pinv_diag: Vec<f64>,
}

impl WeightMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn second_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.second_diag))
    }

    pub fn pinv_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.pinv_diag))
    }
}

/// Second moment of `clamp(Y, -c, c)` for `Y ~ N(0, 1/Δ)`.
pub fn clamped_second_moment(delta: f64, level: f64) -> f64 {
    let var = 1.0 / delta;
    if level.is_infinite() {
        return var;
    }
    let u = level * delta.sqrt();
    var * (normal::central(u) - 2.0 * u * normal::pdf(u)) + 2.0 * level * level * normal::sf(u)
}

pub fn weight_moments(dim: usize, delta: f64, level: f64) -> WeightMoments {
    let b = clamped_second_moment(delta, level);
    let pinv = if b > 0.0 { 1.0 / b } else { 0.0 };
    WeightMoments {
        mean: vec![0.0; dim],
        second_diag: vec![b; dim],
        pinv_diag: vec![pinv; dim],
    }
}

/// One simulated trajectory of `(X, ΔW, β)`.
///
/// `x` has `n + 1` rows; `dw` and `beta` have `n` rows, row `i` holding the
/// increment over `[t_i, t_{i+1}]` (so `beta(i)` is `β_{i+1}`).
#[derive(Debug, Clone, PartialEq)]
pub struct OuterPath {
    dim: usize,
    x: Vec<f64>,
    dw: Vec<f64>,
    beta: Vec<f64>,
}

impl OuterPath {
    pub fn from_parts(dim: usize, x: Vec<f64>, dw: Vec<f64>, beta: Vec<f64>) -> Self {
        assert_eq!(x.len(), dw.len() + dim);
        assert_eq!(dw.len(), beta.len());
        Self { dim, x, dw, beta }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.dw.len() / self.dim
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dw(&self, i: usize) -> &[f64] {
        &self.dw[i * self.dim..(i + 1) * self.dim]
    }

    pub fn beta(&self, i: usize) -> &[f64] {
        &self.beta[i * self.dim..(i + 1) * self.dim]
    }
}

/// `count` conditional one-step samples `(X_{i+1}, β_{i+1})` given `X_i = anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerCloud {
    pub step: usize,
    pub anchor: Vec<f64>,
    dim: usize,
    next_x: Vec<f64>,
    beta: Vec<f64>,
}

impl InnerCloud {
    pub fn with_capacity(dim: usize, count: usize) -> Self {
        Self {
            step: 0,
            anchor: vec![0.0; dim],
            dim,
            next_x: Vec::with_capacity(count * dim),
            beta: Vec::with_capacity(count * dim),
        }
    }

    pub fn len(&self) -> usize {
        self.next_x.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.next_x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn next_x(&self, l: usize) -> &[f64] {
        &self.next_x[l * self.dim..(l + 1) * self.dim]
    }

    pub fn beta(&self, l: usize) -> &[f64] {
        &self.beta[l * self.dim..(l + 1) * self.dim]
    }

    /// Builds a cloud from explicit samples; used by finite-support harnesses.
    pub fn from_samples(step: usize, anchor: Vec<f64>, next_x: Vec<f64>, beta: Vec<f64>) -> Self {
        let dim = anchor.len();
        assert_eq!(next_x.len(), beta.len());
        assert_eq!(next_x.len() % dim.max(1), 0);
        Self {
            step,
            anchor,
            dim,
            next_x,
            beta,
        }
    }
}

/// The simulation setup shared by every stage: model, grid and weight truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub model: GbmModel,
    pub grid: TimeGrid,
    pub truncation: Truncation,
}

impl Simulator {
    pub fn new(model: GbmModel, grid: TimeGrid, truncation: Truncation) -> Result<Self> {
        if truncation.levels().len() != grid.steps() {
            return Err(invalid("truncation", "one level per time step required"));
        }
        Ok(Self {
            model,
            grid,
            truncation,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    /// Path `index` of the stream family `role`; reproducible in isolation.
    pub fn path(&self, seed: u64, role: StreamRole, index: u64) -> OuterPath {
        let dim = self.dim();
        let n = self.steps();
        let mut rng = stream(seed, role, index, 0);
        let mut x = Vec::with_capacity((n + 1) * dim);
        let mut dw = Vec::with_capacity(n * dim);
        let mut beta = Vec::with_capacity(n * dim);
        x.extend_from_slice(&self.model.x0);
        let degenerate = self.model.vol == 0.0;
        for i in 0..n {
            let delta = self.grid.delta(i);
            let sd = delta.sqrt();
            let level = self.truncation.level(i);
            for d in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                let w = sd * z;
                let prev = x[i * dim + d];
                let next = if degenerate {
                    self.model.x0[d] * (self.model.drift * self.grid.time(i + 1)).exp()
                } else {
                    self.model.step(prev, delta, w)
                };
                x.push(next);
                dw.push(w);
                beta.push(truncated_weight(w, delta, level));
            }
        }
        OuterPath { dim, x, dw, beta }
    }

    pub fn outer_path(&self, seed: u64, index: u64) -> OuterPath {
        self.path(seed, StreamRole::Outer, index)
    }

    /// `count` independent outer paths, evaluated in parallel.
    pub fn simulate_outer(&self, seed: u64, count: usize) -> Vec<OuterPath> {
        self.simulate(seed, StreamRole::Outer, count)
    }

    pub fn simulate(&self, seed: u64, role: StreamRole, count: usize) -> Vec<OuterPath> {
        (0..count as u64)
            .into_par_iter()
            .map(|l| self.path(seed, role, l))
            .collect()
    }

    /// Fills `cloud` with `count` conditional samples anchored at `anchor` on
    /// step `step` of outer path `path`.
    pub fn fill_inner(
        &self,
        seed: u64,
        path: u64,
        step: usize,
        anchor: &[f64],
        count: usize,
        cloud: &mut InnerCloud,
    ) {
        let dim = self.dim();
        let delta = self.grid.delta(step);
        let sd = delta.sqrt();
        let level = self.truncation.level(step);
        let mut rng = stream(seed, StreamRole::Inner, path, step as u64);
        cloud.step = step;
        cloud.dim = dim;
        cloud.anchor.clear();
        cloud.anchor.extend_from_slice(anchor);
        cloud.next_x.clear();
        cloud.beta.clear();
        let drift = (self.model.drift - 0.5 * self.model.vol * self.model.vol) * delta;
        let factors: Vec<f64> = anchor.to_vec();
        for _ in 0..count {
            for d in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                let w = sd * z;
                cloud
                    .next_x
                    .push(factors[d] * (drift + self.model.vol * w).exp());
                cloud.beta.push(truncated_weight(w, delta, level));
            }
        }
    }

    pub fn simulate_inner(
        &self,
        seed: u64,
        path: u64,
        step: usize,
        anchor: &[f64],
        count: usize,
    ) -> InnerCloud {
        let mut cloud = InnerCloud::with_capacity(self.dim(), count);
        self.fill_inner(seed, path, step, anchor, count, &mut cloud);
        cloud
    }

    pub fn moments(&self, step: usize) -> WeightMoments {
        weight_moments(
            self.dim(),
            self.grid.delta(step),
            self.truncation.level(step),
        )
    }
}

/// Debug dump with columns `path,step,asset,x,dw,beta`; the terminal row of
/// each path leaves `dw` and `beta` empty.
pub fn write_paths_csv<W: Write>(paths: &[OuterPath], mut out: W) -> io::Result<()> {
    writeln!(out, "path,step,asset,x,dw,beta")?;
    for (p, path) in paths.iter().enumerate() {
        let n = path.steps();
        for i in 0..=n {
            for d in 0..path.dim() {
                if i < n {
                    writeln!(
                        out,
                        "{p},{i},{d},{},{},{}",
                        path.x(i)[d],
                        path.dw(i)[d],
                        path.beta(i)[d]
                    )?;
                } else {
                    writeln!(out, "{p},{i},{d},{},,", path.x(i)[d])?;
                }
            }
        }
    }
    Ok(())
}
