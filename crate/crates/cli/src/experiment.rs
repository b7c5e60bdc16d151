//! Fit → bounds → interval, and the report documents built from the result.

use std::time::Instant;

use pdbsde_core::confidence::ci95;
use pdbsde_core::{
    fit, regression_paths, run_bounds_multi, Approximation, BoundsRun, ConfidenceInterval, Driver,
    Flavor, InnerMode, Problem, RunSettings,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const VERSION_TAG: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// One reported row: a confidence interval for one flavour at one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub label: String,
    pub steps: usize,
    pub flavor: Flavor,
    pub low: f64,
    pub se_low: f64,
    pub up: f64,
    pub se_up: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Row {
    fn new(label: &str, steps: usize, flavor: Flavor, ci: &ConfidenceInterval) -> Self {
        Self {
            label: label.to_string(),
            steps,
            flavor,
            low: ci.mean_low,
            se_low: ci.se_low,
            up: ci.mean_up,
            se_up: ci.se_up,
            ci_lo: ci.lo,
            ci_hi: ci.hi,
        }
    }

    /// `(up − low)/|low|`.
    pub fn relative_gap(&self) -> f64 {
        (self.up - self.low) / self.low.abs()
    }

    /// `(ci_hi − ci_lo)/|low|`.
    pub fn relative_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / self.low.abs()
    }
}

/// One point of the inner-sample sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigurePoint {
    pub inner: usize,
    pub plain_up: f64,
    pub se_plain_up: f64,
    pub cv_up: f64,
    pub se_cv_up: f64,
    pub low: f64,
    pub se_low: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `ỹ_0(x_0)` of the fitted approximation.
    pub fit_y0: f64,
    /// Lipschitz constant of the driver in `y`.
    pub alpha_y: f64,
    /// `alpha_y` rounded to two decimals, as printed in published tables.
    pub alpha_y_2dp: f64,
    /// Lipschitz constant in each `z_d` (zero when the driver ignores `z`).
    pub alpha_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub wall_clock_secs: f64,
}

/// Report document. Everything except `timing` is a deterministic function
/// of the config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure: Option<Vec<FigurePoint>>,
    pub diagnostics: Diagnostics,
    pub timing: Timing,
}

impl Report {
    /// The report with the timing field zeroed; two runs of the same config
    /// serialise to identical bytes.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing {
                wall_clock_secs: 0.0,
            },
            ..self.clone()
        }
    }
}

pub fn diagnostics(
    p: &Problem,
    a: &Approximation,
    cfg: &ExperimentConfig,
) -> Result<Diagnostics, CliError> {
    let y0 = a.eval(p, 0, &vec![cfg.model.x0; cfg.model.dim])?.y;
    let alpha_y = p.driver.alpha_y();
    let alpha_z = match &p.driver {
        Driver::Credit { .. } => 0.0,
        d => d.alpha_z_max(),
    };
    Ok(Diagnostics {
        fit_y0: y0,
        alpha_y,
        alpha_y_2dp: (alpha_y * 100.0).round() / 100.0,
        alpha_z,
    })
}

/// Fits the input approximation on the config's regression paths.
pub fn fit_approximation(cfg: &ExperimentConfig, p: &Problem) -> Result<Approximation, CliError> {
    let paths = regression_paths(p, cfg.seed, cfg.samples.reg);
    Ok(fit(p, &paths, cfg.mode)?)
}

fn settings(cfg: &ExperimentConfig, inner: usize) -> RunSettings {
    RunSettings {
        seed: cfg.seed,
        outer: cfg.samples.outer,
        inner,
        solver: cfg.solver,
    }
}

fn inner_mode(cfg: &ExperimentConfig) -> InnerMode {
    if cfg.cv.inner {
        InnerMode::Cv
    } else {
        InnerMode::Plain
    }
}

/// Raw per-path bounds for the given flavours on one set of outer paths.
pub fn bounds_runs(
    cfg: &ExperimentConfig,
    p: &Problem,
    a: &Approximation,
    flavors: &[Flavor],
) -> Result<Vec<BoundsRun>, CliError> {
    Ok(run_bounds_multi(
        p,
        a,
        flavors,
        &settings(cfg, cfg.samples.inner),
    )?)
}

/// Interval for one run under the config's control-variate choices.
pub fn row_for(cfg: &ExperimentConfig, run: &BoundsRun) -> Result<Row, CliError> {
    let ci = run.ci(inner_mode(cfg), cfg.cv.lower)?;
    Ok(Row::new(&cfg.name(), cfg.grid.steps, run.flavor, &ci))
}

/// Runs `cfg` for each flavour in `flavors` (the config's own flavour when
/// empty), sharing fit, outer paths and inner samples.
pub fn run_flavors(
    cfg: &ExperimentConfig,
    flavors: &[Flavor],
    approx: Option<Approximation>,
) -> Result<Report, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let p = cfg.problem()?;
    let a = match approx {
        Some(a) => {
            a.check(&p)?;
            a
        }
        None => fit_approximation(cfg, &p)?,
    };
    let own = [cfg.flavor()];
    let flavors = if flavors.is_empty() {
        &own[..]
    } else {
        flavors
    };
    let runs = bounds_runs(cfg, &p, &a, flavors)?;
    let mut rows = Vec::with_capacity(runs.len());
    for run in &runs {
        let mut row = row_for(cfg, run)?;
        if flavors.len() > 1 {
            row.label = format!("{}:{}", cfg.name(), run.flavor.name());
        }
        rows.push(row);
    }
    Ok(Report {
        version: VERSION_TAG,
        config: cfg.clone(),
        rows,
        figure: None,
        diagnostics: diagnostics(&p, &a, cfg)?,
        timing: Timing {
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    })
}

/// Fit, bounds and interval for one config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    run_flavors(cfg, &[], None)
}

/// Upper bounds with and without the inner control variate, and the lower
/// bound, for each inner sample size in `inner`. One fit and one set of
/// outer paths serve every point.
pub fn run_figure1(cfg: &ExperimentConfig, inner: &[usize]) -> Result<Report, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let p = cfg.problem()?;
    let a = fit_approximation(cfg, &p)?;
    let flavor = cfg.flavor();
    let mut points = Vec::with_capacity(inner.len());
    let mut rows = Vec::with_capacity(inner.len());
    for &m in inner {
        let run = run_bounds_multi(&p, &a, &[flavor], &settings(cfg, m))?.remove(0);
        let plain = run.ci(InnerMode::Plain, cfg.cv.lower)?;
        let cv = run.ci(InnerMode::Cv, cfg.cv.lower)?;
        let low = ci95(
            &run.low(inner_mode(cfg), cfg.cv.lower),
            &run.up(InnerMode::Cv),
            m,
        )?;
        points.push(FigurePoint {
            inner: m,
            plain_up: plain.mean_up,
            se_plain_up: plain.se_up,
            cv_up: cv.mean_up,
            se_cv_up: cv.se_up,
            low: low.mean_low,
            se_low: low.se_low,
        });
        rows.push(Row::new(
            &format!("{}:inner{m}:plain", cfg.name()),
            cfg.grid.steps,
            flavor,
            &plain,
        ));
        rows.push(Row::new(
            &format!("{}:inner{m}:cv", cfg.name()),
            cfg.grid.steps,
            flavor,
            &cv,
        ));
    }
    Ok(Report {
        version: VERSION_TAG,
        config: cfg.clone(),
        rows,
        figure: Some(points),
        diagnostics: diagnostics(&p, &a, cfg)?,
        timing: Timing {
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    })
}
