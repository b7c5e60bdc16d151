//! Per-path inputs of the bound recursions.
//!
//! Along one outer path every recursion needs the fitted triple
//! `(ỹ_i, q̃_i, z̃_i)`, the realised `ỹ_{i+1}(X_{i+1})` and estimates of
//! `E_i[ỹ_{i+1}]` and `E_i[β_{i+1} ỹ_{i+1}]`. The differences between the
//! realised values and these estimates are the increments of the surrogate
//! Doob martingales `M^0` and `M`. Monte Carlo runs fill them from inner
//! clouds; the exact tree fills them by finite summation.

use serde::{Deserialize, Serialize};

use crate::closed_form::BasisValues;
use crate::error::{invalid, Error, Result};
use crate::lsmc::{Approximation, Triple};
use crate::payoff::Barrier;
use crate::problem::Problem;
use crate::sim::{InnerCloud, OuterPath, WeightMoments};

/// Which inner estimator feeds the martingale increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    Plain,
    Cv,
}

impl InnerMode {
    pub fn name(self) -> &'static str {
        match self {
            InnerMode::Plain => "plain",
            InnerMode::Cv => "cv",
        }
    }
}

/// Estimates of `E_i[ỹ_{i+1}]` and `E_i[β_{i+1} ỹ_{i+1}]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expectations {
    pub y: f64,
    pub by: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    pub delta: f64,
    pub barrier: Barrier,
    pub y: f64,
    pub q: f64,
    pub z: Vec<f64>,
    /// `β_{i+1}` restricted to the driver's `z`-dimension.
    pub beta: Vec<f64>,
    /// Realised `ỹ_{i+1}(X_{i+1})`.
    pub y_next: f64,
    pub plain: Expectations,
    pub cv: Expectations,
}

impl StepInput {
    pub fn est(&self, mode: InnerMode) -> &Expectations {
        match mode {
            InnerMode::Plain => &self.plain,
            InnerMode::Cv => &self.cv,
        }
    }

    /// `M^0_{i+1} − M^0_i`.
    pub fn dm0(&self, mode: InnerMode) -> f64 {
        self.y_next - self.est(mode).y
    }

    /// `M_{d,i+1} − M_{d,i}`.
    pub fn dm(&self, mode: InnerMode, d: usize) -> f64 {
        self.beta[d] * self.y_next - self.est(mode).by[d]
    }
}

/// Everything the recursions read along one path; `terminal` is `S_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathInput {
    pub steps: Vec<StepInput>,
    pub terminal: f64,
}

impl PathInput {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `S_i` as a barrier; `S_n` is always finite.
    pub fn barrier(&self, i: usize) -> Barrier {
        if i == self.steps.len() {
            Barrier::Value(self.terminal)
        } else {
            self.steps[i].barrier
        }
    }

    /// The same path with every expectation replaced by a shifted copy;
    /// used to corrupt martingale inputs in dominance audits.
    pub fn shift_expectations(&mut self, step: usize, by: f64) {
        let s = &mut self.steps[step];
        s.plain.y += by;
        s.cv.y += by;
    }
}

/// Plain and control-variate estimates from one cloud in a single pass.
///
/// `values[l]` is `ỹ_{i+1}` at the `l`-th sample; `(q, z)` are `q̃_i` and
/// `z̃_i` at the anchor; only the first `z.len()` weight coordinates are used.
pub fn inner_estimates(
    values: &[f64],
    cloud: &InnerCloud,
    moments: &WeightMoments,
    q: f64,
    z: &[f64],
) -> Result<(Expectations, Expectations)> {
    let count = values.len();
    if count == 0 || count != cloud.len() {
        return Err(Error::TooFewSamples {
            required: 1,
            actual: count,
        });
    }
    let zd = z.len();
    if zd > cloud.dim() || zd > moments.dim() {
        return Err(invalid("z", "more z-coordinates than weight coordinates"));
    }
    let w: Vec<f64> = (0..zd).map(|d| moments.pinv_diag[d] * z[d]).collect();
    let mut sum_y = 0.0;
    let mut sum_b = vec![0.0; zd];
    let mut sum_by = vec![0.0; zd];
    let mut sum_bs = vec![0.0; zd];
    for (l, &v) in values.iter().enumerate() {
        let b = &cloud.beta(l)[..zd];
        let s: f64 = b.iter().zip(&w).map(|(u, v)| u * v).sum();
        sum_y += v;
        for d in 0..zd {
            sum_b[d] += b[d];
            sum_by[d] += b[d] * v;
            sum_bs[d] += b[d] * s;
        }
    }
    let inv = 1.0 / count as f64;
    let plain = Expectations {
        y: sum_y * inv,
        by: sum_by.iter().map(|v| v * inv).collect(),
    };
    let mean_w: f64 = (0..zd).map(|d| moments.mean[d] * w[d]).sum();
    let sample_w: f64 = (0..zd).map(|d| sum_b[d] * inv * w[d]).sum();
    let cv = Expectations {
        y: mean_w + plain.y - sample_w,
        by: (0..zd)
            .map(|d| {
                moments.mean[d] * q + moments.second_diag[d] * w[d] + plain.by[d]
                    - sum_b[d] * inv * q
                    - sum_bs[d] * inv
            })
            .collect(),
    };
    Ok((plain, cv))
}

/// Sample means of `ỹ_{i+1}` and `β ỹ_{i+1}` over the cloud.
pub fn inner_estimates_plain(
    values: &[f64],
    cloud: &InnerCloud,
    z_dim: usize,
) -> Result<Expectations> {
    let zero = WeightMoments {
        mean: vec![0.0; z_dim],
        second_diag: vec![0.0; z_dim],
        pinv_diag: vec![0.0; z_dim],
    };
    Ok(inner_estimates(values, cloud, &zero, 0.0, &vec![0.0; z_dim])?.0)
}

/// The control-variate estimates built from the projection of `ỹ_{i+1}` on
/// the weights.
pub fn inner_estimates_cv(
    values: &[f64],
    cloud: &InnerCloud,
    moments: &WeightMoments,
    q: f64,
    z: &[f64],
) -> Result<Expectations> {
    Ok(inner_estimates(values, cloud, moments, q, z)?.1)
}

/// Reusable buffers for [`build_path_input`].
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    vals: BasisValues,
    triple: Triple,
    cloud: Option<InnerCloud>,
    values: Vec<f64>,
}

/// Monte Carlo inputs along outer path `index`, with `inner` conditional
/// samples per step drawn from that path's own inner streams.
pub fn build_path_input(
    p: &Problem,
    a: &Approximation,
    moments: &[WeightMoments],
    seed: u64,
    index: u64,
    path: &OuterPath,
    inner: usize,
    ws: &mut Workspace,
) -> Result<PathInput> {
    if inner == 0 {
        return Err(Error::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    let n = p.steps();
    let zd = p.z_dim();
    let mut triples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        a.eval_into(p, i, path.x(i), &mut ws.vals, &mut ws.triple)?;
        triples.push(ws.triple.clone());
    }
    let cloud = ws
        .cloud
        .get_or_insert_with(|| InnerCloud::with_capacity(p.dim(), inner));
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        p.sim.fill_inner(seed, index, i, path.x(i), inner, cloud);
        ws.values.clear();
        for l in 0..inner {
            a.eval_into(p, i + 1, cloud.next_x(l), &mut ws.vals, &mut ws.triple)?;
            ws.values.push(ws.triple.y);
        }
        let t = &triples[i];
        let (plain, cv) = inner_estimates(&ws.values, cloud, &moments[i], t.q, &t.z)?;
        steps.push(StepInput {
            delta: p.delta(i),
            barrier: p.barrier(i, path.x(i)),
            y: t.y,
            q: t.q,
            z: t.z.clone(),
            beta: path.beta(i)[..zd].to_vec(),
            y_next: triples[i + 1].y,
            plain,
            cv,
        });
    }
    Ok(PathInput {
        steps,
        terminal: p.payoff.terminal(path.x(n)),
    })
}
