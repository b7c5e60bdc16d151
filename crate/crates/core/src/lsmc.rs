//! Least-squares input approximations `ỹ_i`, `q̃_i`, `z̃_i`.
//!
//! Two fits share one backward loop. The plain regression scheme (`lgw`)
//! regresses `ỹ_{i+1}(X_{i+1})` and `β_{d,i+1} ỹ_{i+1}(X_{i+1})` on step-`i`
//! basis functions. The martingale-basis scheme (`mb`) regresses
//! `ỹ_{i+1}(X_{i+1})` on step-`i + 1` basis functions whose one-step
//! conditional moments are known in closed form, and maps the coefficients
//! back exactly. In both, `ỹ_i` is composed from `(q̃_i, z̃_i)` by solving the
//! implicit one-step equation and reflecting at the barrier.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{BasisPreset, BasisValues, ZTarget};
use crate::error::{invalid, Error, Result};
use crate::problem::Problem;
use crate::rng::StreamRole;
use crate::sim::OuterPath;

pub const FORMAT_VERSION: u32 = 1;
/// Singular values below this fraction of the largest count as zero.
pub const SVD_CUTOFF: f64 = 1e-10;
/// Ridge weight, relative to the largest squared singular value, used when
/// the scaled design is rank deficient.
pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Lgw,
    Mb,
}

impl FitMode {
    pub fn name(self) -> &'static str {
        match self {
            FitMode::Lgw => "lgw",
            FitMode::Mb => "mb",
        }
    }
}

impl std::str::FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lgw" => Ok(FitMode::Lgw),
            "mb" => Ok(FitMode::Mb),
            _ => Err(invalid("mode", format!("unknown fit mode `{s}`"))),
        }
    }
}

/// Coefficients of `q̃_i` on the `y`-basis and of each `z̃_{d,i}` on row `d`
/// of the `z`-basis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepCoefficients {
    pub q: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

/// Fitted input approximation for steps `0..n`; step `n` is the payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    pub format_version: u32,
    pub mode: FitMode,
    pub basis: BasisPreset,
    pub steps: Vec<StepCoefficients>,
}

/// `(ỹ_i, q̃_i, z̃_i)` at one state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Triple {
    pub y: f64,
    pub q: f64,
    pub z: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

impl Approximation {
    /// All-zero coefficients sized for `p`'s basis.
    pub fn zeros(p: &Problem, mode: FitMode) -> Self {
        let steps = (0..p.steps())
            .map(|i| StepCoefficients {
                q: vec![0.0; p.basis.y_elems(i).len()],
                z: vec![vec![0.0; p.basis.z_elems(i).len()]; p.z_dim()],
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            mode,
            basis: p.basis.preset,
            steps,
        }
    }

    /// Shape and finiteness check against `p`.
    pub fn check(&self, p: &Problem) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "format version {} is not {FORMAT_VERSION}",
                self.format_version
            )));
        }
        if self.basis != p.basis.preset || self.steps.len() != p.steps() {
            return Err(invalid(
                "approximation",
                "coefficients do not match the problem's basis or grid",
            ));
        }
        for (i, c) in self.steps.iter().enumerate() {
            let zl = p.basis.z_elems(i).len();
            if c.q.len() != p.basis.y_elems(i).len()
                || c.z.len() != p.z_dim()
                || c.z.iter().any(|r| r.len() != zl)
            {
                return Err(invalid(
                    "approximation",
                    format!("coefficient shape mismatch at step {i}"),
                ));
            }
            if c.q
                .iter()
                .chain(c.z.iter().flatten())
                .any(|v| !v.is_finite())
            {
                return Err(Error::Invariant(format!(
                    "non-finite coefficient at step {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: Self =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if a.format_version != FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "format version {} is not {FORMAT_VERSION}",
                a.format_version
            )));
        }
        Ok(a)
    }

    /// Builds the triple at `(i, x)` from precomputed basis values `v`.
    pub fn compose(
        &self,
        p: &Problem,
        i: usize,
        x: &[f64],
        v: &BasisValues,
        out: &mut Triple,
    ) -> Result<()> {
        let zd = p.z_dim();
        out.z.clear();
        if i == p.steps() {
            let g = p.payoff.terminal(x);
            out.y = g;
            out.q = g;
            out.z.resize(zd, 0.0);
            return Ok(());
        }
        let c = &self.steps[i];
        out.q = dot(&c.q, &v.y);
        for d in 0..zd {
            out.z.push(dot(&c.z[d], v.z_row(d)));
        }
        let cont = p.driver.fixed_point(i, out.q, &out.z, p.delta(i))?;
        out.y = p.barrier(i, x).reflect(cont);
        Ok(())
    }

    /// [`Approximation::eval`] reusing caller buffers.
    pub fn eval_into(
        &self,
        p: &Problem,
        i: usize,
        x: &[f64],
        v: &mut BasisValues,
        out: &mut Triple,
    ) -> Result<()> {
        if i < p.steps() {
            p.basis.eval(i, x, v)?;
        }
        self.compose(p, i, x, v, out)
    }

    pub fn eval(&self, p: &Problem, i: usize, x: &[f64]) -> Result<Triple> {
        let mut v = BasisValues::default();
        let mut out = Triple::default();
        self.eval_into(p, i, x, &mut v, &mut out)?;
        Ok(out)
    }
}

/// `(ỹ_i(x), q̃_i(x), z̃_i(x))`; at `i = n` this is `(G_n(x), G_n(x), 0)`.
pub fn approx_eval(p: &Problem, a: &Approximation, i: usize, x: &[f64]) -> Result<Triple> {
    a.eval(p, i, x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    /// The scaled design had a singular value below the cutoff, so the
    /// ridge-regularised solution was used.
    pub deficient: bool,
}

/// Minimises `|design · c − target|` for a row-major `rows × cols` design.
///
/// Columns are scaled to unit root-mean-square before an SVD. Without rank
/// deficiency the result is the pseudo-inverse solution; otherwise every
/// singular value is damped as `σ/(σ² + λ)`.
pub fn least_squares(
    rows: usize,
    cols: usize,
    design: &[f64],
    target: &[f64],
) -> Result<LeastSquares> {
    if rows < cols || rows == 0 {
        return Err(Error::TooFewSamples {
            required: cols.max(1),
            actual: rows,
        });
    }
    assert_eq!(design.len(), rows * cols);
    assert_eq!(target.len(), rows);
    let mut scale = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            scale[c] += design[r * cols + c] * design[r * cols + c];
        }
    }
    for s in &mut scale {
        *s = (*s / rows as f64).sqrt();
        if !(*s > 0.0) || !s.is_finite() {
            *s = 1.0;
        }
    }
    let a = DMatrix::from_fn(rows, cols, |r, c| design[r * cols + c] / scale[c]);
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors");
    let vt = svd.v_t.as_ref().expect("right singular vectors");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let deficient = smax == 0.0 || sigma.iter().any(|s| *s <= SVD_CUTOFF * smax);
    let lambda = RIDGE * smax * smax;
    let t = DVector::from_column_slice(target);
    let ut = u.transpose() * t;
    let mut w = DVector::zeros(sigma.len());
    for k in 0..sigma.len() {
        let s = sigma[k];
        w[k] = if deficient {
            if s > 0.0 {
                ut[k] * s / (s * s + lambda)
            } else {
                0.0
            }
        } else {
            ut[k] / s
        };
    }
    let scaled = vt.transpose() * w;
    let coef: Vec<f64> = (0..cols).map(|c| scaled[c] / scale[c]).collect();
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant(
            "least-squares solution is not finite".into(),
        ));
    }
    Ok(LeastSquares { coef, deficient })
}

fn regress(
    step: usize,
    what: &str,
    rows: usize,
    cols: usize,
    design: &[f64],
    target: &[f64],
) -> Result<Vec<f64>> {
    let ls = least_squares(rows, cols, design, target)?;
    if ls.deficient {
        log::warn!("rank-deficient {what} regression at step {step}; ridge fallback applied");
    }
    Ok(ls.coef)
}

/// `count` regression paths on their own stream family.
pub fn regression_paths(p: &Problem, seed: u64, count: usize) -> Vec<OuterPath> {
    p.sim.simulate(seed, StreamRole::Regression, count)
}

pub fn fit(p: &Problem, paths: &[OuterPath], mode: FitMode) -> Result<Approximation> {
    match mode {
        FitMode::Lgw => lgw_fit(p, paths),
        FitMode::Mb => mb_fit(p, paths),
    }
}

fn basis_at(p: &Problem, i: usize, paths: &[OuterPath]) -> Result<Vec<BasisValues>> {
    paths
        .par_iter()
        .map(|pt| {
            let mut v = BasisValues::default();
            p.basis.eval(i, pt.x(i), &mut v)?;
            Ok(v)
        })
        .collect()
}

fn y_at(
    a: &Approximation,
    p: &Problem,
    i: usize,
    paths: &[OuterPath],
    vals: &[BasisValues],
) -> Result<Vec<f64>> {
    paths
        .par_iter()
        .zip(vals)
        .map(|(pt, v)| {
            let mut t = Triple::default();
            a.compose(p, i, pt.x(i), v, &mut t)?;
            Ok(t.y)
        })
        .collect()
}

fn y_design(vals: &[BasisValues]) -> (usize, Vec<f64>) {
    let cols = vals.first().map_or(0, |v| v.y.len());
    (
        cols,
        vals.iter().flat_map(|v| v.y.iter().copied()).collect(),
    )
}

/// Regression scheme: `q̃_i` and `z̃_{d,i}` are empirical projections on the
/// step-`i` bases.
pub fn lgw_fit(p: &Problem, paths: &[OuterPath]) -> Result<Approximation> {
    let n = p.steps();
    let zd = p.z_dim();
    let rows = paths.len();
    let mut a = Approximation::zeros(p, FitMode::Lgw);
    let mut next: Vec<f64> = paths.iter().map(|pt| p.payoff.terminal(pt.x(n))).collect();
    for i in (0..n).rev() {
        let vals = basis_at(p, i, paths)?;
        let (cols, design) = y_design(&vals);
        a.steps[i].q = regress(i, "q", rows, cols, &design, &next)?;
        let zl = p.basis.z_elems(i).len();
        for d in 0..zd {
            let design: Vec<f64> = vals
                .iter()
                .flat_map(|v| v.z_row(d).iter().copied())
                .collect();
            let target: Vec<f64> = paths
                .iter()
                .zip(&next)
                .map(|(pt, y)| pt.beta(i)[d] * y)
                .collect();
            a.steps[i].z[d] = regress(i, "z", rows, zl, &design, &target)?;
        }
        if i > 0 {
            next = y_at(&a, p, i, paths, &vals)?;
        }
    }
    a.check(p)?;
    Ok(a)
}

/// Martingale-basis scheme: `ỹ_{i+1}` is projected on the step-`i + 1`
/// `y`-basis and mapped to `(q̃_i, z̃_i)` through closed-form conditional
/// moments.
pub fn mb_fit(p: &Problem, paths: &[OuterPath]) -> Result<Approximation> {
    let n = p.steps();
    let zd = p.z_dim();
    let rows = paths.len();
    let mut a = Approximation::zeros(p, FitMode::Mb);
    let mut next: Vec<f64> = paths.iter().map(|pt| p.payoff.terminal(pt.x(n))).collect();
    let mut next_vals = basis_at(p, n, paths)?;
    for i in (0..n).rev() {
        let (cols, design) = y_design(&next_vals);
        let c = regress(i + 1, "martingale-basis", rows, cols, &design, &next)?;
        let map = p.basis.mb_map(i)?;
        let step = &mut a.steps[i];
        for (k, term) in map.iter().enumerate() {
            if let Some((idx, f)) = term.q {
                step.q[idx] += c[k] * f;
            }
            match term.z {
                ZTarget::None => {}
                ZTarget::Every(idx, f) => (0..zd).for_each(|d| step.z[d][idx] += c[k] * f),
                ZTarget::Single(d, idx, f) => step.z[d][idx] += c[k] * f,
            }
        }
        if i > 0 {
            let vals = basis_at(p, i, paths)?;
            next = y_at(&a, p, i, paths, &vals)?;
            next_vals = vals;
        }
    }
    a.check(p)?;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let rows = 50;
        let design: Vec<f64> = (0..rows)
            .flat_map(|r| [1.0, r as f64, (r as f64).powi(2)])
            .collect();
        let target: Vec<f64> = (0..rows)
            .map(|r| 2.0 - 0.5 * r as f64 + 0.01 * (r as f64).powi(2))
            .collect();
        let ls = least_squares(rows, 3, &design, &target).unwrap();
        assert!(!ls.deficient);
        assert_relative_eq!(ls.coef[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(ls.coef[1], -0.5, epsilon = 1e-11);
        assert_relative_eq!(ls.coef[2], 0.01, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_column_takes_ridge_path() {
        let design: Vec<f64> = (0..10).flat_map(|r| [1.0, r as f64, r as f64]).collect();
        let target: Vec<f64> = (0..10).map(|r| 1.0 + r as f64).collect();
        let ls = least_squares(10, 3, &design, &target).unwrap();
        assert!(ls.deficient);
        assert_relative_eq!(ls.coef[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(ls.coef[1], 0.5, epsilon = 1e-6);
        assert_relative_eq!(ls.coef[2], 0.5, epsilon = 1e-6);
        // Deterministic design collapses to the sample mean.
        let design = vec![1.0, 100.0].repeat(4);
        let target = [1.0, 2.0, 3.0, 6.0];
        let ls = least_squares(4, 2, &design, &target).unwrap();
        assert_relative_eq!(ls.coef[0] + 100.0 * ls.coef[1], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            least_squares(1, 2, &[1.0, 2.0], &[1.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn fit_mode_names() {
        assert_eq!("mb".parse::<FitMode>().unwrap(), FitMode::Mb);
        assert!("ls".parse::<FitMode>().is_err());
        assert_eq!(FitMode::Lgw.name(), "lgw");
    }
}
