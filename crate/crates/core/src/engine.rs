//! Outer-path loop: builds the per-path inputs and evaluates the bound pair
//! for one flavour. Each path depends only on `(seed, index)`, so the output
//! is the same for every thread count.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{ci95, ConfidenceInterval};
use crate::error::{invalid, Error, Result};
use crate::generator::{Driver, Envelope, Side};
use crate::inputs::{build_path_input, InnerMode, PathInput, Workspace};
use crate::lower::{
    controls_along_path, stopping_time, theta_low_convex, theta_low_h, vartheta_low_concave,
};
use crate::lsmc::Approximation;
use crate::problem::Problem;
use crate::upper::{theta_up_convex, theta_up_h, vartheta_up_concave, DualSolver};

/// Which pair of recursions produces the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// `θ^up` and the linearised `θ^low`; convex drivers.
    Convex,
    /// `ϑ^up` and `ϑ^low`; concave drivers.
    Concave,
    /// `Θ^{h^up}`, `Θ^{h^low}` with the Lipschitz envelopes.
    Generic,
    /// `Θ^{h^up}`, `Θ^{h^low}` with the funding-specific envelopes.
    Semigeneric,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Convex => "convex",
            Flavor::Concave => "concave",
            Flavor::Generic => "generic",
            Flavor::Semigeneric => "semigeneric",
        }
    }

    /// The envelope pair, after checking that the flavour fits `driver`.
    pub fn envelopes(self, driver: &Driver) -> Result<Option<(Envelope, Envelope)>> {
        let shape = driver.shape();
        match self {
            Flavor::Convex if !shape.is_convex() => Err(Error::ShapeMismatch {
                required: "convex",
                actual: "non-convex",
            }),
            Flavor::Concave if !shape.is_concave() => Err(Error::ShapeMismatch {
                required: "concave",
                actual: "non-concave",
            }),
            Flavor::Convex | Flavor::Concave => Ok(None),
            Flavor::Generic => Ok(Some((
                Envelope::Generic(Side::Up),
                Envelope::Generic(Side::Low),
            ))),
            Flavor::Semigeneric => match driver {
                Driver::Funding { params, .. } => Ok(Some((
                    Envelope::Semigeneric(Side::Up, *params),
                    Envelope::Semigeneric(Side::Low, *params),
                ))),
                _ => Err(invalid(
                    "flavor",
                    "semigeneric envelopes exist only for the funding driver",
                )),
            },
        }
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(Flavor::Convex),
            "concave" => Ok(Flavor::Concave),
            "generic" => Ok(Flavor::Generic),
            "semigeneric" => Ok(Flavor::Semigeneric),
            _ => Err(invalid("flavor", format!("unknown flavor `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub outer: usize,
    pub inner: usize,
    pub solver: DualSolver,
}

/// Bound realisations along one outer path. Index 0 of `up`/`low` uses the
/// plain inner estimates, index 1 the control-variate ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub tau: usize,
    pub up: [f64; 2],
    pub low: [f64; 2],
    /// Convex flavour only: `θ^low` without the martingale control variate.
    pub low_raw: Option<f64>,
}

fn slot(mode: InnerMode) -> usize {
    match mode {
        InnerMode::Plain => 0,
        InnerMode::Cv => 1,
    }
}

const MODES: [InnerMode; 2] = [InnerMode::Plain, InnerMode::Cv];

/// Both bounds along one path.
pub fn path_sample(
    driver: &Driver,
    flavor: Flavor,
    envs: Option<&(Envelope, Envelope)>,
    input: &PathInput,
    solver: DualSolver,
) -> Result<PathSample> {
    let tau = stopping_time(driver, input);
    let mut out = PathSample {
        tau,
        up: [0.0; 2],
        low: [0.0; 2],
        low_raw: None,
    };
    match flavor {
        Flavor::Convex => {
            let ctrl = controls_along_path(driver, input, false)?;
            out.low_raw = Some(theta_low_convex(input, tau, &ctrl, None)?);
            for m in MODES {
                out.up[slot(m)] = theta_up_convex(driver, input, m, solver)?[0];
                out.low[slot(m)] = theta_low_convex(input, tau, &ctrl, Some(m))?;
            }
        }
        Flavor::Concave => {
            for m in MODES {
                out.up[slot(m)] = vartheta_up_concave(driver, input, m)?;
                out.low[slot(m)] = vartheta_low_concave(driver, input, m, tau)?[0];
            }
        }
        Flavor::Generic | Flavor::Semigeneric => {
            let (hu, hl) = envs.ok_or_else(|| Error::Invariant("envelopes missing".into()))?;
            for m in MODES {
                out.up[slot(m)] = theta_up_h(driver, hu, input, m)?[0];
                out.low[slot(m)] = theta_low_h(driver, hl, input, m, tau)?[0];
            }
        }
    }
    Ok(out)
}

/// All outer paths of one run, in index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRun {
    pub flavor: Flavor,
    pub outer: usize,
    pub inner: usize,
    pub samples: Vec<PathSample>,
}

impl BoundsRun {
    pub fn up(&self, mode: InnerMode) -> Vec<f64> {
        self.samples.iter().map(|s| s.up[slot(mode)]).collect()
    }

    /// Lower samples; `lower_cv` only matters for the convex flavour, where
    /// it toggles the martingale control variate.
    pub fn low(&self, mode: InnerMode, lower_cv: bool) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match (lower_cv, s.low_raw) {
                (false, Some(raw)) => raw,
                _ => s.low[slot(mode)],
            })
            .collect()
    }

    pub fn ci(&self, mode: InnerMode, lower_cv: bool) -> Result<ConfidenceInterval> {
        ci95(&self.low(mode, lower_cv), &self.up(mode), self.inner)
    }
}

/// Evaluates `settings.outer` paths in parallel.
pub fn run_bounds(
    p: &Problem,
    a: &Approximation,
    flavor: Flavor,
    settings: &RunSettings,
) -> Result<BoundsRun> {
    let mut runs = run_bounds_multi(p, a, &[flavor], settings)?;
    Ok(runs.remove(0))
}

/// Like [`run_bounds`], for several flavours on the same per-path inputs.
pub fn run_bounds_multi(
    p: &Problem,
    a: &Approximation,
    flavors: &[Flavor],
    settings: &RunSettings,
) -> Result<Vec<BoundsRun>> {
    if settings.outer < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            actual: settings.outer,
        });
    }
    if flavors.is_empty() {
        return Err(invalid("flavor", "need at least one flavor"));
    }
    a.check(p)?;
    let envs = flavors
        .iter()
        .map(|f| f.envelopes(&p.driver))
        .collect::<Result<Vec<_>>>()?;
    let moments: Vec<_> = (0..p.steps()).map(|i| p.sim.moments(i)).collect();
    let per_path = (0..settings.outer as u64)
        .into_par_iter()
        .map_init(Workspace::default, |ws, l| {
            let path = p.sim.outer_path(settings.seed, l);
            let input =
                build_path_input(p, a, &moments, settings.seed, l, &path, settings.inner, ws)?;
            flavors
                .iter()
                .zip(&envs)
                .map(|(f, e)| path_sample(&p.driver, *f, e.as_ref(), &input, settings.solver))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(flavors
        .iter()
        .enumerate()
        .map(|(k, f)| BoundsRun {
            flavor: *f,
            outer: settings.outer,
            inner: settings.inner,
            samples: per_path.iter().map(|row| row[k]).collect(),
        })
        .collect())
}
