//! Experiment configuration: a versioned JSON document with a strict schema.

use std::fmt;

use pdbsde_core::{
    Basis, BasisPreset, CreditParams, Driver, DualSolver, FitMode, Flavor, FundingParams, GbmModel,
    Payoff, PayoffKind, Problem, Simulator, TimeGrid, Truncation,
};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;
pub const MIN_REG: usize = 10;
pub const MIN_OUTER: usize = 2;
pub const MIN_INNER: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub label: Option<String>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub generator: GeneratorConfig,
    pub payoff: PayoffConfig,
    pub basis: BasisPreset,
    #[serde(default = "default_mode")]
    pub mode: FitMode,
    pub samples: SampleConfig,
    /// Defaults to `convex` for convex drivers and `generic` otherwise.
    #[serde(default)]
    pub flavor: Option<Flavor>,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_solver")]
    pub solver: DualSolver,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    /// Weight truncation level `c`; `None` derives it from the driver's
    /// `z`-Lipschitz constants.
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_x0")]
    pub x0: f64,
    pub drift: f64,
    pub vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// Differential lending/borrowing rates; drift and volatility come from
    /// the model.
    Funding { lending: f64, borrowing: f64 },
    /// Default risk with a three-regime intensity; `rate` defaults to the
    /// model drift.
    Credit {
        #[serde(default)]
        rate: Option<f64>,
        recovery: f64,
        v_high: f64,
        v_low: f64,
        gamma_high: f64,
        gamma_low: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exercise {
    European,
    Bermudan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    /// `(max x − K1)_+ − 2 (max x − K2)_+`.
    CallSpreadMax {
        k1: f64,
        k2: f64,
        #[serde(default = "default_exercise")]
        exercise: Exercise,
    },
    MaxCall {
        strike: f64,
        #[serde(default = "default_exercise")]
        exercise: Exercise,
    },
    MinAsset {
        #[serde(default = "default_exercise")]
        exercise: Exercise,
    },
}

impl PayoffConfig {
    pub fn kind(&self) -> PayoffKind {
        match *self {
            PayoffConfig::CallSpreadMax { k1, k2, .. } => PayoffKind::CallSpreadMax { k1, k2 },
            PayoffConfig::MaxCall { strike, .. } => PayoffKind::MaxCall { strike },
            PayoffConfig::MinAsset { .. } => PayoffKind::MinAsset,
        }
    }

    pub fn exercise(&self) -> Exercise {
        match *self {
            PayoffConfig::CallSpreadMax { exercise, .. }
            | PayoffConfig::MaxCall { exercise, .. }
            | PayoffConfig::MinAsset { exercise } => exercise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub reg: usize,
    pub outer: usize,
    pub inner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "yes")]
    pub inner: bool,
    #[serde(default = "yes")]
    pub lower: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            inner: true,
            lower: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_mode() -> FitMode {
    FitMode::Lgw
}
fn default_seed() -> u64 {
    1
}
fn default_solver() -> DualSolver {
    DualSolver::Picard
}
fn default_nodes() -> usize {
    pdbsde_core::closed_form::DEFAULT_NODES
}
fn default_dim() -> usize {
    5
}
fn default_x0() -> f64 {
    100.0
}
fn default_exercise() -> Exercise {
    Exercise::European
}
fn yes() -> bool {
    true
}

/// One offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    /// Malformed document or schema mismatch; `line`/`column` are 1-based.
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Invalid(Vec<FieldError>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse {
                line,
                column,
                message,
            } => {
                write!(
                    f,
                    "config parse error at line {line}, column {column}: {message}"
                )
            }
            ConfigError::Invalid(errs) => {
                write!(f, "invalid config:")?;
                for e in errs {
                    write!(f, "\n  {}: {}", e.field, e.reason)?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| "experiment".into())
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor.unwrap_or(match self.generator {
            GeneratorConfig::Funding { .. } => Flavor::Convex,
            GeneratorConfig::Credit { .. } => Flavor::Generic,
        })
    }

    /// Collects every violated constraint instead of stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, reason: String| {
            errs.push(FieldError {
                field: field.into(),
                reason,
            })
        };
        if self.version != CONFIG_VERSION {
            bad(
                "version",
                format!(
                    "unsupported version {}, expected {CONFIG_VERSION}",
                    self.version
                ),
            );
        }
        if self.model.dim == 0 {
            bad("model.dim", "must be at least 1".into());
        }
        if !(self.model.x0 > 0.0) {
            bad("model.x0", "must be positive".into());
        }
        if !(self.model.vol >= 0.0) || !self.model.drift.is_finite() {
            bad(
                "model",
                "need finite drift and non-negative volatility".into(),
            );
        }
        if !(self.grid.horizon > 0.0) {
            bad("grid.horizon", "must be positive".into());
        }
        if self.grid.steps == 0 {
            bad("grid.steps", "must be at least 1".into());
        }
        if self.payoff.exercise() == Exercise::Bermudan && self.grid.steps % 4 != 0 {
            bad(
                "grid.steps",
                format!(
                    "Bermudan exercise needs a step count divisible by 4, got {}",
                    self.grid.steps
                ),
            );
        }
        if self.samples.reg < MIN_REG {
            bad("samples.reg", format!("must be at least {MIN_REG}"));
        }
        if self.samples.outer < MIN_OUTER {
            bad("samples.outer", format!("must be at least {MIN_OUTER}"));
        }
        if self.samples.inner < MIN_INNER {
            bad("samples.inner", format!("must be at least {MIN_INNER}"));
        }
        if self.quadrature_nodes == 0 {
            bad("quadrature_nodes", "must be at least 1".into());
        }
        if let Some(c) = self.truncation {
            if !(c > 0.0) {
                bad("truncation", "must be positive".into());
            }
        }
        match &self.generator {
            GeneratorConfig::Funding { lending, borrowing } => {
                if !(lending <= borrowing) {
                    bad(
                        "generator.borrowing",
                        "must not be below the lending rate".into(),
                    );
                }
                if !(self.model.vol > 0.0) {
                    bad(
                        "model.vol",
                        "the funding driver needs positive volatility".into(),
                    );
                }
            }
            GeneratorConfig::Credit {
                recovery,
                v_high,
                v_low,
                gamma_high,
                gamma_low,
                ..
            } => {
                if !(0.0..1.0).contains(recovery) {
                    bad("generator.recovery", "must lie in [0, 1)".into());
                }
                if !(v_high < v_low) {
                    bad("generator.v_high", "must be below v_low".into());
                }
                if !(gamma_high > gamma_low) {
                    bad("generator.gamma_high", "must exceed gamma_low".into());
                }
            }
        }
        if let Err(e) = self.flavor().envelopes(&self.driver_unchecked()) {
            bad("flavor", e.to_string());
        }
        let european_basis = matches!(self.basis, BasisPreset::Eu2 | BasisPreset::Eu7);
        if european_basis && self.payoff.exercise() != Exercise::European {
            bad(
                "basis",
                format!("{} needs European exercise", self.basis.name()),
            );
        }
        if self.mode == FitMode::Mb && !european_basis {
            bad(
                "mode",
                "the martingale-basis fit needs the eu2 or eu7 basis".into(),
            );
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    fn driver_unchecked(&self) -> Driver {
        match &self.generator {
            GeneratorConfig::Funding { lending, borrowing } => Driver::Funding {
                params: FundingParams {
                    lending: *lending,
                    borrowing: *borrowing,
                    drift: self.model.drift,
                    vol: self.model.vol,
                },
                dim: self.model.dim,
            },
            GeneratorConfig::Credit {
                rate,
                recovery,
                v_high,
                v_low,
                gamma_high,
                gamma_low,
            } => Driver::Credit {
                params: CreditParams {
                    rate: rate.unwrap_or(self.model.drift),
                    recovery: *recovery,
                    v_high: *v_high,
                    v_low: *v_low,
                    gamma_high: *gamma_high,
                    gamma_low: *gamma_low,
                },
            },
        }
    }

    pub fn driver(&self) -> pdbsde_core::Result<Driver> {
        let d = self.driver_unchecked();
        match &d {
            Driver::Funding { params, dim } => Driver::funding(*params, *dim),
            Driver::Credit { params } => Driver::credit(*params),
            _ => Ok(d),
        }
    }

    /// Builds the discrete problem described by this config.
    pub fn problem(&self) -> pdbsde_core::Result<Problem> {
        let n = self.grid.steps;
        let grid = TimeGrid::uniform(self.grid.horizon, n)?;
        let model = GbmModel::new(
            vec![self.model.x0; self.model.dim],
            self.model.drift,
            self.model.vol,
        )?;
        let driver = self.driver()?;
        let payoff = match self.payoff.exercise() {
            Exercise::European => Payoff::european(self.payoff.kind(), n),
            Exercise::Bermudan => Payoff::bermudan(self.payoff.kind(), n)?,
        };
        let basis = Basis::new(
            self.basis,
            &payoff,
            &grid,
            &model,
            driver.z_dim(),
            self.quadrature_nodes,
        )?;
        let truncation = match self.truncation {
            Some(c) => Truncation::uniform(c, n)?,
            None => Truncation::from_lipschitz(&grid, driver.z_dim(), |_| driver.alpha_z_max()),
        };
        let sim = Simulator::new(model, grid, truncation)?;
        Problem::new(sim, driver, payoff, basis)
    }
}
