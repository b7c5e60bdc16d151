//! Closed-form conditional expectations of max- and min-type payoffs under
//! i.i.d. geometric Brownian motion, and the regression bases built on them.
//!
//! For `M = max_e X_e(τ)` the distribution function factorises,
//! `P(ln M ≤ ℓ) = Π_e Φ(t_e(ℓ))` with `t_e = (ℓ − ln x_e − ντ)/s`,
//! `ν = μ − σ²/2` and `s = σ√τ`, so
//! `E[(M − K)_+] = ∫_{ln K}^∞ (1 − Π_e Φ(t_e(ℓ))) e^ℓ dℓ`.
//! The integral is evaluated by Gauss–Legendre quadrature over a window of
//! `±WINDOW` standard deviations around the largest log-forward; the part of
//! the integrand below the window equals `e^ℓ` to double precision and is
//! added analytically.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::payoff::{max_of, Payoff, PayoffKind};
use crate::sim::{GbmModel, TimeGrid};

pub const DEFAULT_NODES: usize = 21;
const WINDOW: f64 = 8.0;
/// Asset counts up to this size use stack scratch in the delta loop.
const STACK_DIM: usize = 16;
/// Window for the minimum, in units of `s` below and above the lowest
/// log-forward. The product of survival functions decays well before `+4s`.
const MIN_WINDOW: (f64, f64) = (7.5, 4.0);

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("quadrature_nodes", "need at least one node"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_lo^hi g` for smooth `g`.
    pub fn integrate(&self, lo: f64, hi: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * g(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Log-forward coordinates of `x` after `tau` years.
struct Forward {
    logs: Vec<f64>,
    s: f64,
}

impl Forward {
    fn new(x: &[f64], tau: f64, drift: f64, vol: f64) -> Self {
        let nu_tau = (drift - 0.5 * vol * vol) * tau;
        Self {
            logs: x.iter().map(|v| v.ln() + nu_tau).collect(),
            s: vol * tau.sqrt(),
        }
    }
}

/// `E[(M − K)_+]`; when `deltas` is given, adds `scale · x_d ∂_{x_d}` of it
/// to `deltas[d]`.
fn max_call_core(
    q: &Quadrature,
    fw: &Forward,
    strike: f64,
    deltas: Option<(&mut [f64], f64)>,
) -> f64 {
    let dim = fw.logs.len();
    let top = fw.logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (a, b) = (top - WINDOW * fw.s, top + WINDOW * fw.s);
    let log_k = if strike > 0.0 {
        strike.ln()
    } else {
        f64::NEG_INFINITY
    };
    let below = if log_k < a {
        a.exp() - strike.max(0.0)
    } else {
        0.0
    };
    let lo = log_k.max(a);
    if lo >= b {
        return below;
    }
    let half = 0.5 * (b - lo);
    let mid = 0.5 * (b + lo);
    let inv_s = 1.0 / fw.s;
    let mut total = 0.0;
    match deltas {
        None => {
            for (xi, w) in q.nodes.iter().zip(&q.weights) {
                let l = mid + half * xi;
                let mut p = 1.0;
                for lg in &fw.logs {
                    p *= normal::cdf_pdf((l - lg) * inv_s).0;
                    if p == 0.0 {
                        break;
                    }
                }
                total += w * (1.0 - p) * l.exp();
            }
        }
        Some((out, scale)) => {
            let mut stack = [0.0; 4 * STACK_DIM + 1];
            let mut heap = Vec::new();
            let buf: &mut [f64] = if dim <= STACK_DIM {
                &mut stack[..4 * dim + 1]
            } else {
                heap.resize(4 * dim + 1, 0.0);
                &mut heap
            };
            let (cdf, rest) = buf.split_at_mut(dim);
            let (pdf, rest) = rest.split_at_mut(dim);
            let (acc, suffix) = rest.split_at_mut(dim);
            acc.iter_mut().for_each(|v| *v = 0.0);
            suffix[dim] = 1.0;
            for (xi, w) in q.nodes.iter().zip(&q.weights) {
                let l = mid + half * xi;
                for e in 0..dim {
                    (cdf[e], pdf[e]) = normal::cdf_pdf((l - fw.logs[e]) * inv_s);
                }
                for e in (0..dim).rev() {
                    suffix[e] = suffix[e + 1] * cdf[e];
                }
                let el = l.exp();
                total += w * (1.0 - suffix[0]) * el;
                let wel = w * inv_s * el;
                let mut prefix = 1.0;
                for e in 0..dim {
                    acc[e] += wel * pdf[e] * prefix * suffix[e + 1];
                    prefix *= cdf[e];
                }
            }
            for e in 0..dim {
                out[e] += scale * acc[e] * half;
            }
        }
    }
    below + total * half
}

/// Undiscounted `E[(max_e X_e(τ) − K)_+]` for i.i.d. GBM started at `x`.
pub fn max_call_expectation(
    q: &Quadrature,
    x: &[f64],
    tau: f64,
    strike: f64,
    drift: f64,
    vol: f64,
) -> Result<f64> {
    if tau < 0.0 {
        return Err(invalid("tau", "remaining time must be non-negative"));
    }
    if tau == 0.0 || vol == 0.0 {
        let g = (drift * tau).exp();
        return Ok((max_of(x) * g - strike).max(0.0));
    }
    Ok(max_call_core(
        q,
        &Forward::new(x, tau, drift, vol),
        strike,
        None,
    ))
}

/// Discounted max-call price with the drift set to the rate.
pub fn maxcall_price(
    q: &Quadrature,
    x: &[f64],
    tau: f64,
    strike: f64,
    rate: f64,
    vol: f64,
) -> Result<f64> {
    Ok((-rate * tau).exp() * max_call_expectation(q, x, tau, strike, rate, vol)?)
}

/// `x_d ∂/∂x_d` of the discounted max-call price.
pub fn maxcall_delta(
    q: &Quadrature,
    x: &[f64],
    tau: f64,
    strike: f64,
    rate: f64,
    vol: f64,
    d: usize,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(invalid("tau", "delta needs positive remaining time"));
    }
    if d >= x.len() {
        return Err(invalid("d", "asset index out of range"));
    }
    let mut out = vec![0.0; x.len()];
    max_call_core(
        q,
        &Forward::new(x, tau, rate, vol),
        strike,
        Some((&mut out, 1.0)),
    );
    Ok((-rate * tau).exp() * out[d])
}

/// Undiscounted `E[min_e X_e(τ)]`.
pub fn min_expectation(q: &Quadrature, x: &[f64], tau: f64, drift: f64, vol: f64) -> f64 {
    if tau == 0.0 || vol == 0.0 {
        return x.iter().copied().fold(f64::INFINITY, f64::min) * (drift * tau).exp();
    }
    let fw = Forward::new(x, tau, drift, vol);
    let bottom = fw.logs.iter().copied().fold(f64::INFINITY, f64::min);
    let (a, b) = (bottom - MIN_WINDOW.0 * fw.s, bottom + MIN_WINDOW.1 * fw.s);
    let inv_s = 1.0 / fw.s;
    a.exp()
        + q.integrate(a, b, |l| {
            let mut p = 1.0;
            for lg in &fw.logs {
                p *= normal::cdf_pdf((lg - l) * inv_s).0;
                if p == 0.0 {
                    break;
                }
            }
            p * l.exp()
        })
}

/// Undiscounted `E[G(X(τ))]` and, when `deltas` is given, `x_d ∂_d` of it.
pub fn payoff_expectation(
    q: &Quadrature,
    kind: &PayoffKind,
    x: &[f64],
    tau: f64,
    drift: f64,
    vol: f64,
    deltas: Option<&mut [f64]>,
) -> Result<f64> {
    if tau == 0.0 {
        if deltas.is_some() {
            return Err(invalid("tau", "delta needs positive remaining time"));
        }
        return Ok(kind.eval(x));
    }
    let degenerate = vol == 0.0;
    match kind {
        PayoffKind::CallSpreadMax { k1, k2 } => {
            if degenerate {
                let g = (drift * tau).exp();
                let fwd: Vec<f64> = x.iter().map(|v| v * g).collect();
                if let Some(out) = deltas {
                    out.iter_mut().for_each(|v| *v = 0.0);
                }
                return Ok(kind.eval(&fwd));
            }
            let fw = Forward::new(x, tau, drift, vol);
            match deltas {
                Some(out) => {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    let a = max_call_core(q, &fw, *k1, Some((&mut *out, 1.0)));
                    let b = max_call_core(q, &fw, *k2, Some((out, -2.0)));
                    Ok(a - 2.0 * b)
                }
                None => {
                    Ok(max_call_core(q, &fw, *k1, None) - 2.0 * max_call_core(q, &fw, *k2, None))
                }
            }
        }
        PayoffKind::MaxCall { strike } => {
            if degenerate {
                return max_call_expectation(q, x, tau, *strike, drift, vol);
            }
            let fw = Forward::new(x, tau, drift, vol);
            match deltas {
                Some(out) => {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    Ok(max_call_core(q, &fw, *strike, Some((out, 1.0))))
                }
                None => Ok(max_call_core(q, &fw, *strike, None)),
            }
        }
        PayoffKind::MinAsset => {
            if deltas.is_some() {
                return Err(Error::Unsupported("delta of the min payoff"));
            }
            Ok(min_expectation(q, x, tau, drift, vol))
        }
        PayoffKind::Constant { value } => {
            if let Some(out) = deltas {
                out.iter_mut().for_each(|v| *v = 0.0);
            }
            Ok(*value)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisPreset {
    Eu2,
    Eu7,
    Bermudan6,
    Constant,
}

impl BasisPreset {
    pub fn name(self) -> &'static str {
        match self {
            BasisPreset::Eu2 => "eu2",
            BasisPreset::Eu7 => "eu7",
            BasisPreset::Bermudan6 => "bermudan6",
            BasisPreset::Constant => "constant",
        }
    }
}

impl std::str::FromStr for BasisPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eu2" => Ok(BasisPreset::Eu2),
            "eu7" => Ok(BasisPreset::Eu7),
            "bermudan6" => Ok(BasisPreset::Bermudan6),
            "constant" => Ok(BasisPreset::Constant),
            _ => Err(invalid("basis", format!("unknown preset `{s}`"))),
        }
    }
}

/// One `y`-basis function at a given step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YElem {
    One,
    /// `E[G_j(X_j) | X_i = x]`.
    Price(usize),
    Asset(usize),
    /// `max_{j ∈ ℰ, j ≥ i} E[G_j(X_j) | X_i = x]`.
    MaxPrice,
}

/// One `z_d`-basis function; the same list is used for every `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZElem {
    One,
    /// `x_d ∂_d E[G_j(X_j) | X_i = x]`.
    Delta(usize),
    /// `x_d`.
    Asset,
}

/// Basis values at one `(i, x)`; `z` is row-major with one row per dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasisValues {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub z_len: usize,
    priced: Vec<(usize, f64)>,
    scratch: Vec<f64>,
}

impl BasisValues {
    pub fn z_row(&self, d: usize) -> &[f64] {
        &self.z[d * self.z_len..(d + 1) * self.z_len]
    }
}

/// Where the conditional expectation of one `y`-basis function at step
/// `i + 1` lands in the step-`i` bases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZTarget {
    None,
    /// Adds `factor · zbasis[index]` to every `z̃_d`.
    Every(usize, f64),
    /// Adds `factor · zbasis[index]` to `z̃_d` for this `d` only.
    Single(usize, usize, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MbTerm {
    pub q: Option<(usize, f64)>,
    pub z: ZTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub preset: BasisPreset,
    kind: PayoffKind,
    exercise: Vec<usize>,
    times: Vec<f64>,
    drift: f64,
    vol: f64,
    dim: usize,
    z_dim: usize,
    quad: Quadrature,
    y_elems: Vec<Vec<YElem>>,
    z_elems: Vec<Vec<ZElem>>,
}

impl Basis {
    pub fn new(
        preset: BasisPreset,
        payoff: &Payoff,
        grid: &TimeGrid,
        model: &GbmModel,
        z_dim: usize,
        nodes: usize,
    ) -> Result<Self> {
        let european = payoff.exercise_dates() == [grid.steps()];
        if matches!(preset, BasisPreset::Eu2 | BasisPreset::Eu7) && !european {
            return Err(invalid(
                "basis",
                format!("{} needs a European payoff", preset.name()),
            ));
        }
        if payoff.steps() != grid.steps() {
            return Err(invalid(
                "payoff",
                "exercise grid and time grid differ in length",
            ));
        }
        if z_dim != 0 && z_dim != model.dim() {
            return Err(invalid("basis", "z dimension must be 0 or the asset count"));
        }
        if z_dim > 0
            && matches!(payoff.kind, PayoffKind::MinAsset)
            && preset != BasisPreset::Constant
        {
            return Err(Error::Unsupported("delta basis for the min payoff"));
        }
        let mut basis = Self {
            preset,
            kind: payoff.kind.clone(),
            exercise: payoff.exercise_dates().to_vec(),
            times: grid.times().to_vec(),
            drift: model.drift,
            vol: model.vol,
            dim: model.dim(),
            z_dim,
            quad: Quadrature::gauss_legendre(nodes)?,
            y_elems: Vec::new(),
            z_elems: Vec::new(),
        };
        let n = grid.steps();
        basis.y_elems = (0..=n).map(|i| basis.build_y(i)).collect();
        basis.z_elems = (0..=n).map(|i| basis.build_z(i)).collect();
        Ok(basis)
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    fn dates_from(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.exercise.iter().copied().filter(move |&j| j >= i)
    }

    fn build_y(&self, i: usize) -> Vec<YElem> {
        let n = self.steps();
        match self.preset {
            BasisPreset::Constant => vec![YElem::One],
            BasisPreset::Eu2 => vec![YElem::One, YElem::Price(n)],
            BasisPreset::Eu7 => {
                let mut v = vec![YElem::One, YElem::Price(n)];
                v.extend((0..self.dim).map(YElem::Asset));
                v
            }
            BasisPreset::Bermudan6 => {
                let mut v = vec![YElem::One];
                v.extend(self.dates_from(i).map(YElem::Price));
                v.push(YElem::MaxPrice);
                v
            }
        }
    }

    /// Empty at the terminal date, where no `z` is needed.
    fn build_z(&self, i: usize) -> Vec<ZElem> {
        let n = self.steps();
        if self.z_dim == 0 || i == n {
            return Vec::new();
        }
        match self.preset {
            BasisPreset::Constant => vec![ZElem::One],
            BasisPreset::Eu2 => vec![ZElem::Delta(n)],
            BasisPreset::Eu7 => vec![ZElem::Delta(n), ZElem::Asset],
            BasisPreset::Bermudan6 => {
                let v: Vec<ZElem> = self.dates_from(i + 1).map(ZElem::Delta).collect();
                if v.is_empty() {
                    vec![ZElem::One]
                } else {
                    v
                }
            }
        }
    }

    pub fn y_elems(&self, i: usize) -> &[YElem] {
        &self.y_elems[i]
    }

    pub fn z_elems(&self, i: usize) -> &[ZElem] {
        &self.z_elems[i]
    }

    fn tau(&self, i: usize, j: usize) -> f64 {
        self.times[j] - self.times[i]
    }

    /// `E[G_j(X_j) | X_i = x]` (undiscounted, simulation drift).
    pub fn price(&self, i: usize, j: usize, x: &[f64]) -> Result<f64> {
        payoff_expectation(
            &self.quad,
            &self.kind,
            x,
            self.tau(i, j),
            self.drift,
            self.vol,
            None,
        )
    }

    /// Price together with `x_d ∂_d` of it, written into `deltas`.
    pub fn price_and_deltas(
        &self,
        i: usize,
        j: usize,
        x: &[f64],
        deltas: &mut [f64],
    ) -> Result<f64> {
        payoff_expectation(
            &self.quad,
            &self.kind,
            x,
            self.tau(i, j),
            self.drift,
            self.vol,
            Some(deltas),
        )
    }

    /// Fills `out` with the `y`- and `z`-basis values at `(i, x)`, reusing
    /// its buffers.
    pub fn eval(&self, i: usize, x: &[f64], out: &mut BasisValues) -> Result<()> {
        let y_elems = &self.y_elems[i];
        let z_elems = &self.z_elems[i];
        let z_len = z_elems.len();
        out.y.clear();
        out.z.clear();
        out.z.resize(self.z_dim * z_len, 0.0);
        out.z_len = z_len;
        out.priced.clear();
        out.scratch.resize(self.dim, 0.0);
        for (k, e) in z_elems.iter().enumerate() {
            match *e {
                ZElem::One => (0..self.z_dim).for_each(|d| out.z[d * z_len + k] = 1.0),
                ZElem::Asset => (0..self.z_dim).for_each(|d| out.z[d * z_len + k] = x[d]),
                ZElem::Delta(j) => {
                    let p = self.price_and_deltas(i, j, x, &mut out.scratch)?;
                    out.priced.push((j, p));
                    for d in 0..self.z_dim {
                        out.z[d * z_len + k] = out.scratch[d];
                    }
                }
            }
        }
        let mut max_price = f64::NEG_INFINITY;
        for e in y_elems {
            let v = match *e {
                YElem::One => 1.0,
                YElem::Asset(d) => x[d],
                YElem::Price(j) => {
                    let p = match out.priced.iter().find(|(date, _)| *date == j) {
                        Some(&(_, p)) => p,
                        None => self.price(i, j, x)?,
                    };
                    max_price = max_price.max(p);
                    p
                }
                YElem::MaxPrice => max_price,
            };
            out.y.push(v);
        }
        Ok(())
    }

    /// Closed-form image of each step-`i + 1` `y`-basis function under
    /// `E_i[·]` and `E_i[β_d ·]`, expressed in the step-`i` bases. The
    /// `β`-moments are those of untruncated increments.
    pub fn mb_map(&self, i: usize) -> Result<Vec<MbTerm>> {
        let next = self.y_elems(i + 1);
        let here_y = self.y_elems(i);
        let here_z = self.z_elems(i);
        let growth = (self.drift * (self.times[i + 1] - self.times[i])).exp();
        let find_y = |e: YElem| here_y.iter().position(|v| *v == e);
        let find_z = |e: ZElem| here_z.iter().position(|v| *v == e);
        next.iter()
            .map(|e| match *e {
                YElem::One => Ok(MbTerm {
                    q: find_y(YElem::One).map(|k| (k, 1.0)),
                    z: ZTarget::None,
                }),
                YElem::Price(j) => {
                    let q = find_y(YElem::Price(j)).ok_or(Error::Unsupported(
                        "martingale basis without matching price",
                    ))?;
                    let z = if self.z_dim == 0 {
                        ZTarget::None
                    } else {
                        let k = find_z(ZElem::Delta(j)).ok_or(Error::Unsupported(
                            "martingale basis without matching delta",
                        ))?;
                        ZTarget::Every(k, self.vol)
                    };
                    Ok(MbTerm {
                        q: Some((q, 1.0)),
                        z,
                    })
                }
                YElem::Asset(d) => {
                    let q = find_y(YElem::Asset(d))
                        .ok_or(Error::Unsupported("martingale basis without asset term"))?;
                    let z = if self.z_dim == 0 {
                        ZTarget::None
                    } else {
                        let k = find_z(ZElem::Asset)
                            .ok_or(Error::Unsupported("martingale basis without asset z-term"))?;
                        ZTarget::Single(d, k, self.vol * growth)
                    };
                    Ok(MbTerm {
                        q: Some((q, growth)),
                        z,
                    })
                }
                YElem::MaxPrice => Err(Error::Unsupported(
                    "martingale basis for the max-price function",
                )),
            })
            .collect()
    }

    /// `(E_i[b(X_{i+1})], E_i[ΔW_d/Δ_i · b(X_{i+1})])` for the step-`i + 1`
    /// basis function `elem`, evaluated at `x`.
    pub fn mb_conditional(&self, elem: YElem, i: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let growth = (self.drift * (self.times[i + 1] - self.times[i])).exp();
        match elem {
            YElem::One => Ok((1.0, vec![0.0; self.dim])),
            YElem::Price(j) => {
                let mut dl = vec![0.0; self.dim];
                let p = self.price_and_deltas(i, j, x, &mut dl)?;
                Ok((p, dl.iter().map(|v| self.vol * v).collect()))
            }
            YElem::Asset(e) => {
                let mut z = vec![0.0; self.dim];
                z[e] = self.vol * growth * x[e];
                Ok((growth * x[e], z))
            }
            YElem::MaxPrice => Err(Error::Unsupported(
                "martingale basis for the max-price function",
            )),
        }
    }
}
