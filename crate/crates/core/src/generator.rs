//! Drivers `f(y, z)` of the dynamic program, their Lipschitz profiles,
//! conjugates and subgradients, and the envelopes `h^up` / `h^low` used for
//! drivers that are neither convex nor concave.
//!
//! All drivers here are time-homogeneous and do not depend on the state `x`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, StreamRole};
use crate::solve::{self, Envelope as Fold, PicardTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundingParams {
    pub lending: f64,
    pub borrowing: f64,
    pub drift: f64,
    pub vol: f64,
}

impl FundingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lending <= self.borrowing) {
            return Err(invalid(
                "borrowing",
                "lending rate must not exceed borrowing rate",
            ));
        }
        if !(self.vol > 0.0) {
            return Err(invalid("vol", "funding driver needs positive volatility"));
        }
        Ok(())
    }

    /// Per-asset `z`-Lipschitz constant `max(|μ − R^l|, |R^b − μ|)/σ`.
    pub fn alpha_z(&self) -> f64 {
        (self.drift - self.lending)
            .abs()
            .max((self.borrowing - self.drift).abs())
            / self.vol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreditParams {
    pub rate: f64,
    pub recovery: f64,
    pub v_high: f64,
    pub v_low: f64,
    pub gamma_high: f64,
    pub gamma_low: f64,
}

impl CreditParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.recovery) {
            return Err(invalid("recovery", "must lie in [0, 1)"));
        }
        if !(self.v_high < self.v_low) {
            return Err(invalid("v_high", "need v_high < v_low"));
        }
        if !(self.gamma_high > self.gamma_low) {
            return Err(invalid("gamma_high", "need gamma_high > gamma_low"));
        }
        Ok(())
    }

    /// Default intensity: `γ^h` below `v^h`, `γ^l` above `v^l`, linear between.
    pub fn intensity(&self, y: f64) -> f64 {
        if y <= self.v_high {
            self.gamma_high
        } else if y >= self.v_low {
            self.gamma_low
        } else {
            let w = (y - self.v_high) / (self.v_low - self.v_high);
            self.gamma_high + w * (self.gamma_low - self.gamma_high)
        }
    }

    fn intensity_slope(&self) -> f64 {
        (self.gamma_low - self.gamma_high) / (self.v_low - self.v_high)
    }

    /// One-sided `y`-derivatives of `f` at both thresholds.
    pub fn kink_slopes(&self) -> [f64; 4] {
        let keep = 1.0 - self.recovery;
        let k = self.intensity_slope();
        let mid = |v: f64| -keep * (k * v + self.intensity(v)) - self.rate;
        [
            -keep * self.gamma_high - self.rate,
            mid(self.v_high),
            mid(self.v_low),
            -keep * self.gamma_low - self.rate,
        ]
    }

    pub fn alpha_y(&self) -> f64 {
        self.kink_slopes().iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    fn eval(&self, y: f64) -> f64 {
        -(1.0 - self.recovery) * self.intensity(y) * y - self.rate * y
    }

    fn slope(&self, y: f64) -> f64 {
        let keep = 1.0 - self.recovery;
        if y < self.v_high {
            -keep * self.gamma_high - self.rate
        } else if y >= self.v_low {
            -keep * self.gamma_low - self.rate
        } else {
            -keep * (self.intensity_slope() * y + self.intensity(y)) - self.rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Affine,
    Convex,
    Concave,
    General,
}

impl Shape {
    pub fn is_convex(self) -> bool {
        matches!(self, Shape::Affine | Shape::Convex)
    }

    pub fn is_concave(self) -> bool {
        matches!(self, Shape::Affine | Shape::Concave)
    }

    fn name(self) -> &'static str {
        match self {
            Shape::Affine => "affine",
            Shape::Convex => "convex",
            Shape::Concave => "concave",
            Shape::General => "general",
        }
    }

    fn flip(self) -> Self {
        match self {
            Shape::Convex => Shape::Concave,
            Shape::Concave => Shape::Convex,
            s => s,
        }
    }
}

/// A subgradient `(r, ρ)` of a convex function together with its conjugate
/// value `r·y + ρᵀz − f(y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgradient {
    pub r: f64,
    pub rho: Vec<f64>,
    pub conj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Driver {
    Zero {
        dim: usize,
    },
    /// `f(y, z) = −rate·y + z_coefᵀz`.
    Linear {
        rate: f64,
        z_coef: Vec<f64>,
    },
    Funding {
        params: FundingParams,
        dim: usize,
    },
    Credit {
        params: CreditParams,
    },
    /// `f(y, z) = −g(−y, −z)`; turns a convex `g` into a concave driver.
    Mirrored {
        inner: Box<Driver>,
    },
}

impl Driver {
    pub fn funding(params: FundingParams, dim: usize) -> Result<Self> {
        params.validate()?;
        Ok(Driver::Funding { params, dim })
    }

    pub fn credit(params: CreditParams) -> Result<Self> {
        params.validate()?;
        Ok(Driver::Credit { params })
    }

    pub fn linear(rate: f64, z_coef: Vec<f64>) -> Self {
        Driver::Linear { rate, z_coef }
    }

    pub fn mirrored(inner: Driver) -> Self {
        Driver::Mirrored {
            inner: Box::new(inner),
        }
    }

    pub fn z_dim(&self) -> usize {
        match self {
            Driver::Zero { dim } => *dim,
            Driver::Linear { z_coef, .. } => z_coef.len(),
            Driver::Funding { dim, .. } => *dim,
            Driver::Credit { .. } => 0,
            Driver::Mirrored { inner } => inner.z_dim(),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Driver::Zero { .. } | Driver::Linear { .. } => Shape::Affine,
            Driver::Funding { .. } => Shape::Convex,
            Driver::Credit { .. } => Shape::General,
            Driver::Mirrored { inner } => inner.shape().flip(),
        }
    }

    pub fn eval(&self, y: f64, z: &[f64]) -> f64 {
        match self {
            Driver::Zero { .. } => 0.0,
            Driver::Linear { rate, z_coef } => {
                -rate * y + z_coef.iter().zip(z).map(|(c, v)| c * v).sum::<f64>()
            }
            Driver::Funding { params: p, .. } => {
                let sz: f64 = z.iter().sum();
                let gap = y - sz / p.vol;
                -p.lending * y - (p.drift - p.lending) / p.vol * sz
                    + (p.borrowing - p.lending) * (-gap).max(0.0)
            }
            Driver::Credit { params } => params.eval(y),
            Driver::Mirrored { inner } => {
                let nz: Vec<f64> = z.iter().map(|v| -v).collect();
                -inner.eval(-y, &nz)
            }
        }
    }

    /// `α^(0)`.
    pub fn alpha_y(&self) -> f64 {
        match self {
            Driver::Zero { .. } => 0.0,
            Driver::Linear { rate, .. } => rate.abs(),
            Driver::Funding { params, .. } => params.borrowing.abs().max(params.lending.abs()),
            Driver::Credit { params } => params.alpha_y(),
            Driver::Mirrored { inner } => inner.alpha_y(),
        }
    }

    /// `α^(d)`.
    pub fn alpha_z(&self, d: usize) -> f64 {
        match self {
            Driver::Zero { .. } | Driver::Credit { .. } => 0.0,
            Driver::Linear { z_coef, .. } => z_coef[d].abs(),
            Driver::Funding { params, .. } => params.alpha_z(),
            Driver::Mirrored { inner } => inner.alpha_z(d),
        }
    }

    pub fn alpha_z_max(&self) -> f64 {
        (0..self.z_dim()).fold(0.0, |m, d| m.max(self.alpha_z(d)))
    }

    /// Checks both step-size relations for one step of length `delta` and
    /// weights clamped at `level`.
    pub fn check_step(&self, delta: f64, level: f64) -> Result<()> {
        if !(self.alpha_y() * delta < 1.0) {
            return Err(invalid(
                "steps",
                format!(
                    "alpha_y * delta = {} must be below 1",
                    self.alpha_y() * delta
                ),
            ));
        }
        let worst: f64 = (0..self.z_dim()).map(|d| self.alpha_z(d) * level).sum();
        if worst * delta > 1.0 + 1e-12 {
            return Err(invalid(
                "truncation",
                format!("sum_d alpha_d * c * delta = {} exceeds 1", worst * delta),
            ));
        }
        Ok(())
    }

    /// Subgradient of a convex (or affine) driver at `(y, z)`.
    ///
    /// For the funding driver the kink `y = Σz/σ` is assigned to the
    /// borrowing branch, and the conjugate value is exactly zero.
    pub fn subgradient(&self, y: f64, z: &[f64]) -> Result<Subgradient> {
        match self {
            Driver::Zero { dim } => Ok(Subgradient {
                r: 0.0,
                rho: vec![0.0; *dim],
                conj: 0.0,
            }),
            Driver::Linear { rate, z_coef } => Ok(Subgradient {
                r: -rate,
                rho: z_coef.clone(),
                conj: 0.0,
            }),
            Driver::Funding { params: p, dim } => {
                let sz: f64 = z.iter().sum();
                let r = if y <= sz / p.vol {
                    -p.borrowing
                } else {
                    -p.lending
                };
                Ok(Subgradient {
                    r,
                    rho: vec![-(r + p.drift) / p.vol; *dim],
                    conj: 0.0,
                })
            }
            Driver::Mirrored { inner } => {
                let nz: Vec<f64> = z.iter().map(|v| -v).collect();
                let s = inner.neg_subgradient(-y, &nz)?;
                Ok(Subgradient {
                    r: -s.r,
                    rho: s.rho.iter().map(|v| -v).collect(),
                    conj: s.conj,
                })
            }
            Driver::Credit { .. } => Err(Error::ShapeMismatch {
                required: "convex",
                actual: self.shape().name(),
            }),
        }
    }

    /// Subgradient of `−f` for a concave (or affine) driver; `conj` is
    /// `(−f)^#(r, ρ) = r·y + ρᵀz + f(y, z)`.
    pub fn neg_subgradient(&self, y: f64, z: &[f64]) -> Result<Subgradient> {
        match self {
            Driver::Zero { dim } => Ok(Subgradient {
                r: 0.0,
                rho: vec![0.0; *dim],
                conj: 0.0,
            }),
            Driver::Linear { rate, z_coef } => Ok(Subgradient {
                r: *rate,
                rho: z_coef.iter().map(|v| -v).collect(),
                conj: 0.0,
            }),
            Driver::Mirrored { inner } => {
                let nz: Vec<f64> = z.iter().map(|v| -v).collect();
                let s = inner.subgradient(-y, &nz)?;
                Ok(Subgradient {
                    r: -s.r,
                    rho: s.rho.iter().map(|v| -v).collect(),
                    conj: s.conj,
                })
            }
            Driver::Funding { .. } | Driver::Credit { .. } => Err(Error::ShapeMismatch {
                required: "concave",
                actual: self.shape().name(),
            }),
        }
    }

    /// Derivative of `f` in `y` on the branch containing `y` (right
    /// derivative at the thresholds) and zero `z`-slopes. For the credit
    /// driver this is the natural one-dimensional control.
    pub fn local_slope(&self, y: f64, z: &[f64]) -> Subgradient {
        let (r, rho) = match self {
            Driver::Credit { params } => (params.slope(y), Vec::new()),
            _ => match self.subgradient(y, z).or_else(|_| {
                self.neg_subgradient(y, z).map(|s| Subgradient {
                    r: -s.r,
                    rho: s.rho.iter().map(|v| -v).collect(),
                    conj: 0.0,
                })
            }) {
                Ok(s) => (s.r, s.rho),
                Err(_) => (0.0, vec![0.0; self.z_dim()]),
            },
        };
        let conj = r * y + rho.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - self.eval(y, z);
        Subgradient { r, rho, conj }
    }

    /// Finite set containing every maximiser of `r ↦ r·y − f^{#y}(r, z)`.
    pub fn candidate_r_set(&self) -> Result<Vec<f64>> {
        match self {
            Driver::Zero { .. } => Ok(vec![0.0]),
            Driver::Linear { rate, .. } => Ok(vec![-rate]),
            Driver::Funding { params, .. } => Ok(vec![-params.borrowing, -params.lending]),
            _ => Err(Error::Unsupported("conjugate in y")),
        }
    }

    /// `f^{#y}(r, z) = sup_y { r·y − f(y, z) }` on its effective domain.
    pub fn conjugate_y(&self, r: f64, z: &[f64]) -> Result<f64> {
        const EPS: f64 = 1e-14;
        match self {
            Driver::Zero { .. } => {
                if r.abs() <= EPS {
                    Ok(0.0)
                } else {
                    Err(Error::OutsideDomain { r })
                }
            }
            Driver::Linear { rate, z_coef } => {
                if (r + rate).abs() <= EPS {
                    Ok(-z_coef.iter().zip(z).map(|(c, v)| c * v).sum::<f64>())
                } else {
                    Err(Error::OutsideDomain { r })
                }
            }
            Driver::Funding { params: p, .. } => {
                if r < -p.borrowing - EPS || r > -p.lending + EPS {
                    return Err(Error::OutsideDomain { r });
                }
                let sz: f64 = z.iter().sum();
                Ok(sz / p.vol * (p.drift + r))
            }
            _ => Err(Error::Unsupported("conjugate in y")),
        }
    }

    /// Affine pieces `(a_k, b_k)` of `y ↦ f(y, z)` with `f = max_k` (convex)
    /// or `min_k` (concave) of `a_k y + b_k`; `None` when `f` is not
    /// piecewise affine in `y`.
    pub fn y_pieces(&self, z: &[f64]) -> Option<(Vec<(f64, f64)>, Fold)> {
        match self {
            Driver::Zero { .. } | Driver::Linear { .. } | Driver::Funding { .. } => {
                let pieces = self
                    .candidate_r_set()
                    .ok()?
                    .into_iter()
                    .map(|r| Some((r, -self.conjugate_y(r, z).ok()?)))
                    .collect::<Option<Vec<_>>>()?;
                Some((pieces, Fold::Max))
            }
            Driver::Mirrored { inner } => {
                let nz: Vec<f64> = z.iter().map(|v| -v).collect();
                let (pieces, fold) = inner.y_pieces(&nz)?;
                // -g(-y) = -max(a(-y) + b) = min(a y - b)
                let flipped = pieces.into_iter().map(|(a, b)| (a, -b)).collect();
                let fold = match fold {
                    Fold::Max => Fold::Min,
                    Fold::Min => Fold::Max,
                };
                Some((flipped, fold))
            }
            Driver::Credit { .. } => None,
        }
    }

    /// Solves `y = a + f(y, z)·Δ` by Picard iteration from the explicit guess
    /// `a + f(a, z)·Δ`.
    pub fn solve_implicit(
        &self,
        step: usize,
        a: f64,
        z: &[f64],
        delta: f64,
    ) -> Result<PicardTrace> {
        solve::picard(step, a + self.eval(a, z) * delta, |y| {
            a + self.eval(y, z) * delta
        })
    }

    /// Same fixed point as [`Driver::solve_implicit`], exact for piecewise
    /// affine drivers and by Picard iteration otherwise.
    pub fn fixed_point(&self, step: usize, a: f64, z: &[f64], delta: f64) -> Result<f64> {
        match self.y_pieces(z) {
            Some((pieces, fold)) => Ok(solve::piecewise_fixed_point(a, delta, &pieces, fold)),
            None => Ok(self.solve_implicit(step, a, z, delta)?.value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Up,
    Low,
}

pub type CustomEnvelopeFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;

/// The local convex majorant (`Up`) or concave minorant (`Low`) increment
/// `h(ỹ, z̃; y, z)`.
#[derive(Clone)]
pub enum Envelope {
    /// `±(α^(0)|y| + Σ_d α^(d)|z_d|)`.
    Generic(Side),
    /// Linear part of the funding driver plus the `(R^b − R^l)`-weighted
    /// positive (up) or negative (low) part of `y − Σz/σ`.
    Semigeneric(Side, FundingParams),
    Custom(Side, CustomEnvelopeFn),
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Generic(s) => write!(f, "Generic({s:?})"),
            Envelope::Semigeneric(s, p) => write!(f, "Semigeneric({s:?}, {p:?})"),
            Envelope::Custom(s, _) => write!(f, "Custom({s:?})"),
        }
    }
}

pub const ENVELOPE_PROBES: usize = 10_000;

impl Envelope {
    pub fn side(&self) -> Side {
        match self {
            Envelope::Generic(s) | Envelope::Semigeneric(s, _) | Envelope::Custom(s, _) => *s,
        }
    }

    pub fn eval(&self, driver: &Driver, ty: f64, tz: &[f64], y: f64, z: &[f64]) -> f64 {
        match self {
            Envelope::Generic(side) => {
                let v = driver.alpha_y() * y.abs()
                    + z.iter()
                        .enumerate()
                        .map(|(d, v)| driver.alpha_z(d) * v.abs())
                        .sum::<f64>();
                match side {
                    Side::Up => v,
                    Side::Low => -v,
                }
            }
            Envelope::Semigeneric(side, p) => {
                let sz: f64 = z.iter().sum();
                let lin = p.lending * y + (p.drift - p.lending) / p.vol * sz;
                let gap = y - sz / p.vol;
                let spread = p.borrowing - p.lending;
                match side {
                    Side::Up => lin + spread * gap.max(0.0),
                    Side::Low => lin - spread * (-gap).max(0.0),
                }
            }
            Envelope::Custom(_, h) => h(ty, tz, y, z),
        }
    }

    /// Pieces `(s_k, c_k)` with `h(·; y, w) = max_k / min_k (s_k y + c_k)` for a
    /// fixed `z`-argument `w`; `None` for custom envelopes.
    pub fn y_pieces(&self, driver: &Driver, w: &[f64]) -> Option<(Vec<(f64, f64)>, Fold)> {
        match self {
            Envelope::Generic(side) => {
                let a0 = driver.alpha_y();
                let c: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(d, v)| driver.alpha_z(d) * v.abs())
                    .sum();
                Some(match side {
                    Side::Up => (vec![(a0, c), (-a0, c)], Fold::Max),
                    Side::Low => (vec![(a0, -c), (-a0, -c)], Fold::Min),
                })
            }
            Envelope::Semigeneric(side, p) => {
                let sw: f64 = w.iter().sum();
                let lin = (p.drift - p.lending) / p.vol * sw;
                let spread = p.borrowing - p.lending;
                let pieces = vec![(p.lending, lin), (p.borrowing, lin - spread * sw / p.vol)];
                Some(match side {
                    Side::Up => (pieces, Fold::Max),
                    Side::Low => (pieces, Fold::Min),
                })
            }
            Envelope::Custom(..) => None,
        }
    }

    /// Randomised check of the envelope axioms against `driver`: Lipschitz
    /// bound, normalisation and domination (up) or subordination (low).
    pub fn validate(&self, driver: &Driver, seed: u64, probes: usize, scale: f64) -> Result<()> {
        let dim = driver.z_dim();
        let mut rng = stream(seed, StreamRole::Audit, 0x4e56, 0);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> (f64, Vec<f64>) {
            let y = scale * (2.0 * rng.random::<f64>() - 1.0);
            let z = (0..dim)
                .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            (y, z)
        };
        let tol = 1e-12;
        for _ in 0..probes {
            let (ty, tz) = draw(&mut rng);
            let (y, z) = draw(&mut rng);
            let (y2, z2) = draw(&mut rng);
            let zero = vec![0.0; dim];
            let h0 = self.eval(driver, ty, &tz, 0.0, &zero);
            if h0.abs() > tol {
                return Err(Error::Invariant(format!(
                    "envelope not normalised: h(0,0) = {h0}"
                )));
            }
            let h1 = self.eval(driver, ty, &tz, y, &z);
            let h2 = self.eval(driver, ty, &tz, y2, &z2);
            let bound = driver.alpha_y() * (y - y2).abs()
                + (0..dim)
                    .map(|d| driver.alpha_z(d) * (z[d] - z2[d]).abs())
                    .sum::<f64>();
            if (h1 - h2).abs() > bound + tol * scale.max(1.0) {
                return Err(Error::Invariant(
                    "envelope violates the Lipschitz bound".into(),
                ));
            }
            let dy = ty - y;
            let dz: Vec<f64> = tz.iter().zip(&z).map(|(a, b)| a - b).collect();
            let h = self.eval(driver, ty, &tz, dy, &dz);
            let gap = driver.eval(y, &z) - driver.eval(ty, &tz);
            let ok = match self.side() {
                Side::Up => h >= gap - tol * scale.max(1.0),
                Side::Low => h <= gap + tol * scale.max(1.0),
            };
            if !ok {
                return Err(Error::Invariant(format!(
                    "envelope fails the comparison with f at y~={ty}, y={y}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn funding() -> Driver {
        Driver::funding(
            FundingParams {
                lending: 0.01,
                borrowing: 0.06,
                drift: 0.05,
                vol: 0.2,
            },
            5,
        )
        .unwrap()
    }

    fn credit(recovery: f64) -> Driver {
        Driver::credit(CreditParams {
            rate: 0.02,
            recovery,
            v_high: 54.0,
            v_low: 90.0,
            gamma_high: 0.2,
            gamma_low: 0.02,
        })
        .unwrap()
    }

    #[test]
    fn funding_values() {
        let f = funding();
        let z0 = [0.0; 5];
        assert_eq!(f.eval(0.0, &z0), 0.0);
        assert_relative_eq!(f.eval(1.0, &z0), -0.01, epsilon = 1e-15);
        assert_relative_eq!(f.eval(-1.0, &z0), 0.06, epsilon = 1e-15);
        assert_eq!(f.alpha_y(), 0.06);
        assert_relative_eq!(f.alpha_z(0), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn funding_subgradient_branches() {
        let f = funding();
        let z0 = [0.0; 5];
        let s = f.subgradient(1.0, &z0).unwrap();
        assert_eq!(s.r, -0.01);
        assert_relative_eq!(s.rho[0], -0.2, epsilon = 1e-15);
        assert_eq!(s.conj, 0.0);
        let s = f.subgradient(-1.0, &z0).unwrap();
        assert_eq!(s.r, -0.06);
        assert_relative_eq!(s.rho[0], 0.05, epsilon = 1e-15);
        // kink goes to the borrowing branch
        assert_eq!(f.subgradient(0.0, &z0).unwrap().r, -0.06);
    }

    #[test]
    fn funding_conjugate_values() {
        let f = funding();
        assert_eq!(f.conjugate_y(-0.01, &[0.0; 5]).unwrap(), 0.0);
        let z = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert_relative_eq!(f.conjugate_y(-0.01, &z).unwrap(), 0.2, epsilon = 1e-15);
        assert!(matches!(
            f.conjugate_y(0.5, &z),
            Err(Error::OutsideDomain { .. })
        ));
        assert_eq!(f.candidate_r_set().unwrap(), vec![-0.06, -0.01]);
    }

    #[test]
    fn credit_values() {
        let c = credit(0.0);
        let Driver::Credit { params } = &c else {
            unreachable!()
        };
        assert_relative_eq!(params.intensity(72.0), 0.11, epsilon = 1e-15);
        assert_eq!(c.eval(0.0, &[]), 0.0);
        let rounded = |x: f64| (x * 100.0).round() / 100.0;
        assert_eq!(rounded(credit(0.0).alpha_y()), 0.41);
        assert_eq!(rounded(credit(1.0 / 3.0).alpha_y()), 0.27);
        assert_eq!(rounded(credit(2.0 / 3.0).alpha_y()), 0.12);
        assert_eq!(c.shape(), Shape::General);
        assert!(c.subgradient(1.0, &[]).is_err());
        assert!(matches!(
            c.conjugate_y(0.0, &[]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn credit_local_slope_is_branch_derivative() {
        let c = credit(0.0);
        let s = c.local_slope(40.0, &[]);
        assert_relative_eq!(s.r, -0.22, epsilon = 1e-15);
        assert!(s.rho.is_empty());
        let s = c.local_slope(100.0, &[]);
        assert_relative_eq!(s.r, -0.04, epsilon = 1e-15);
        let h = 1e-6;
        let y = 70.0;
        let fd = (c.eval(y + h, &[]) - c.eval(y - h, &[])) / (2.0 * h);
        assert_relative_eq!(c.local_slope(y, &[]).r, fd, epsilon = 1e-8);
    }

    #[test]
    fn mirrored_funding_is_concave() {
        let g = Driver::mirrored(funding());
        assert_eq!(g.shape(), Shape::Concave);
        let z = [0.3, -0.1, 0.2, 0.0, 0.5];
        for &y in &[-2.0, 0.0, 1.3, 7.0] {
            assert_relative_eq!(
                g.eval(y, &z),
                -funding().eval(-y, &[-0.3, 0.1, -0.2, 0.0, -0.5])
            );
            let s = g.neg_subgradient(y, &z).unwrap();
            let lhs =
                s.r * y + s.rho.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + g.eval(y, &z);
            assert_relative_eq!(lhs, s.conj, epsilon = 1e-13);
        }
        assert!(g.subgradient(0.0, &z).is_err());
    }

    #[test]
    fn fixed_point_agrees_with_picard() {
        let z = [0.4, -0.2, 0.1, 0.3, 0.0];
        for drv in [
            funding(),
            Driver::mirrored(funding()),
            Driver::linear(0.1, vec![0.05; 5]),
        ] {
            for &a in &[-5.0, 0.0, 0.3, 14.0] {
                let exact = drv.fixed_point(0, a, &z, 0.1).unwrap();
                let iter = drv.solve_implicit(0, a, &z, 0.1).unwrap().value;
                assert_relative_eq!(exact, iter, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn envelopes_validate() {
        let f = funding();
        let Driver::Funding { params, .. } = &f else {
            unreachable!()
        };
        for env in [
            Envelope::Generic(Side::Up),
            Envelope::Generic(Side::Low),
            Envelope::Semigeneric(Side::Up, *params),
            Envelope::Semigeneric(Side::Low, *params),
        ] {
            env.validate(&f, 1, 2_000, 20.0).unwrap();
        }
        let c = credit(0.0);
        Envelope::Generic(Side::Up)
            .validate(&c, 2, 2_000, 150.0)
            .unwrap();
        Envelope::Generic(Side::Low)
            .validate(&c, 3, 2_000, 150.0)
            .unwrap();
        let zero: CustomEnvelopeFn = Arc::new(|_, _, _, _| 0.0);
        assert!(Envelope::Custom(Side::Up, zero)
            .validate(&f, 4, 2_000, 20.0)
            .is_err());
    }

    #[test]
    fn generic_up_value() {
        let f = funding();
        let h = Envelope::Generic(Side::Up);
        assert_relative_eq!(h.eval(&f, 0.0, &[0.0; 5], 1.0, &[0.0; 5]), 0.06);
        assert_eq!(h.eval(&f, 3.0, &[1.0; 5], 0.0, &[0.0; 5]), 0.0);
    }
}
