//! Named experiment configurations for the published tables and figure.
//!
//! Sample sizes are the published ones. Each preset also carries the
//! published `(low, se, up, se)` row where there is one.

use pdbsde_core::{BasisPreset, FitMode, Flavor};

use crate::config::{
    CvConfig, Exercise, ExperimentConfig, GeneratorConfig, GridConfig, ModelConfig, OutputConfig,
    PayoffConfig, SampleConfig, CONFIG_VERSION,
};

/// Published lower and upper means with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedRow {
    pub low: f64,
    pub se_low: f64,
    pub up: f64,
    pub se_up: f64,
}

const fn row(low: f64, se_low: f64, up: f64, se_up: f64) -> PublishedRow {
    PublishedRow {
        low,
        se_low,
        up,
        se_up,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub config: ExperimentConfig,
    pub published: Option<PublishedRow>,
}

pub const STEPS: [usize; 4] = [40, 80, 120, 160];
pub const FIGURE1_INNER: [usize; 4] = [100, 250, 500, 1000];

/// Funding example: call spread on the maximum of five assets.
pub fn funding_base(steps: usize) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        label: None,
        model: ModelConfig {
            dim: 5,
            x0: 100.0,
            drift: 0.05,
            vol: 0.2,
        },
        grid: GridConfig {
            horizon: 0.25,
            steps,
        },
        generator: GeneratorConfig::Funding {
            lending: 0.01,
            borrowing: 0.06,
        },
        payoff: PayoffConfig::CallSpreadMax {
            k1: 95.0,
            k2: 115.0,
            exercise: Exercise::European,
        },
        basis: BasisPreset::Eu7,
        mode: FitMode::Mb,
        samples: SampleConfig {
            reg: 1000,
            outer: 10_000,
            inner: 100,
        },
        flavor: Some(Flavor::Convex),
        cv: CvConfig::default(),
        seed: 1,
        solver: pdbsde_core::DualSolver::Picard,
        quadrature_nodes: pdbsde_core::closed_form::DEFAULT_NODES,
        truncation: None,
        output: OutputConfig::default(),
    }
}

/// Credit example: minimum of five assets under default risk.
pub fn credit_base(recovery: f64, steps: usize) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig {
            dim: 5,
            x0: 100.0,
            drift: 0.02,
            vol: 0.2,
        },
        grid: GridConfig {
            horizon: 1.0,
            steps,
        },
        generator: GeneratorConfig::Credit {
            rate: None,
            recovery,
            v_high: 54.0,
            v_low: 90.0,
            gamma_high: 0.2,
            gamma_low: 0.02,
        },
        payoff: PayoffConfig::MinAsset {
            exercise: Exercise::European,
        },
        basis: BasisPreset::Eu2,
        mode: FitMode::Lgw,
        samples: SampleConfig {
            reg: 100_000,
            outer: 4000,
            inner: 1000,
        },
        flavor: Some(Flavor::Generic),
        ..funding_base(steps)
    }
}

struct Table1Row {
    tag: &'static str,
    mode: FitMode,
    basis: BasisPreset,
    reg: usize,
    bermudan: bool,
    published: [PublishedRow; 4],
}

const TABLE1: [Table1Row; 8] = [
    Table1Row {
        tag: "lgw2-1e4",
        mode: FitMode::Lgw,
        basis: BasisPreset::Eu2,
        reg: 10_000,
        bermudan: false,
        published: [
            row(13.7786, 0.0028, 13.8339, 0.0031),
            row(13.7597, 0.0033, 13.8858, 0.0041),
            row(13.7583, 0.0037, 13.9482, 0.0051),
            row(13.7478, 0.0043, 14.0149, 0.0062),
        ],
    },
    Table1Row {
        tag: "lgw2-1e5",
        mode: FitMode::Lgw,
        basis: BasisPreset::Eu2,
        reg: 100_000,
        bermudan: false,
        published: [
            row(13.7783, 0.0022, 13.8172, 0.0024),
            row(13.7817, 0.0022, 13.8443, 0.0027),
            row(13.7848, 0.0024, 13.8682, 0.0029),
            row(13.7855, 0.0025, 13.8967, 0.0033),
        ],
    },
    Table1Row {
        tag: "mb2",
        mode: FitMode::Mb,
        basis: BasisPreset::Eu2,
        reg: 100,
        bermudan: false,
        published: [
            row(13.7850, 0.0022, 13.8185, 0.0023),
            row(13.7898, 0.0021, 13.8435, 0.0025),
            row(13.7863, 0.0022, 13.8578, 0.0025),
            row(13.7904, 0.0022, 13.8779, 0.0026),
        ],
    },
    Table1Row {
        tag: "lgw7-1e5",
        mode: FitMode::Lgw,
        basis: BasisPreset::Eu7,
        reg: 100_000,
        bermudan: false,
        published: [
            row(13.7818, 0.0020, 13.8140, 0.0021),
            row(13.7767, 0.0020, 13.8321, 0.0022),
            row(13.7789, 0.0022, 13.8560, 0.0025),
            row(13.7764, 0.0025, 13.8902, 0.0031),
        ],
    },
    Table1Row {
        tag: "lgw7-1e6",
        mode: FitMode::Lgw,
        basis: BasisPreset::Eu7,
        reg: 1_000_000,
        bermudan: false,
        published: [
            row(13.7829, 0.0017, 13.8079, 0.0018),
            row(13.7867, 0.0016, 13.8233, 0.0018),
            row(13.7884, 0.0017, 13.8393, 0.0020),
            row(13.7867, 0.0017, 13.8515, 0.0022),
        ],
    },
    Table1Row {
        tag: "mb7",
        mode: FitMode::Mb,
        basis: BasisPreset::Eu7,
        reg: 1000,
        bermudan: false,
        published: [
            row(13.7844, 0.0017, 13.8077, 0.0017),
            row(13.7897, 0.0016, 13.8245, 0.0017),
            row(13.7887, 0.0016, 13.8353, 0.0019),
            row(13.7880, 0.0017, 13.8485, 0.0021),
        ],
    },
    Table1Row {
        tag: "berm-1e5",
        mode: FitMode::Lgw,
        basis: BasisPreset::Bermudan6,
        reg: 100_000,
        bermudan: true,
        published: [
            row(15.5362, 0.0028, 15.5664, 0.0028),
            row(15.5441, 0.0037, 15.6160, 0.0035),
            row(15.5246, 0.0041, 15.6396, 0.0042),
            row(15.5342, 0.0041, 15.6886, 0.0048),
        ],
    },
    Table1Row {
        tag: "berm-1e6",
        mode: FitMode::Lgw,
        basis: BasisPreset::Bermudan6,
        reg: 1_000_000,
        bermudan: true,
        published: [
            row(15.5422, 0.0028, 15.5684, 0.0026),
            row(15.5482, 0.0032, 15.6050, 0.0033),
            row(15.5441, 0.0035, 15.6364, 0.0039),
            row(15.5443, 0.0039, 15.6694, 0.0042),
        ],
    },
];

/// `(tag, δ, rows for n = 40, 80, 120, 160)`.
const TABLE2: [(&str, f64, [PublishedRow; 4]); 3] = [
    (
        "delta0",
        0.0,
        [
            row(71.6551, 0.0071, 71.8589, 0.0068),
            row(71.6774, 0.0072, 71.8828, 0.0068),
            row(71.6664, 0.0070, 71.8656, 0.0068),
            row(71.6621, 0.0069, 71.8659, 0.0072),
        ],
    ),
    (
        "delta1_3",
        1.0 / 3.0,
        [
            row(74.1023, 0.0062, 74.2241, 0.0060),
            row(74.1010, 0.0065, 74.2225, 0.0062),
            row(74.1032, 0.0062, 74.2229, 0.0061),
            row(74.1187, 0.0065, 74.2391, 0.0063),
        ],
    ),
    (
        "delta2_3",
        2.0 / 3.0,
        [
            row(76.3335, 0.0057, 76.3865, 0.0057),
            row(76.3364, 0.0057, 76.3886, 0.0057),
            row(76.3416, 0.0059, 76.3943, 0.0058),
            row(76.3290, 0.0061, 76.3814, 0.0059),
        ],
    ),
];

/// Published Lipschitz constants for the three recovery rates, as printed.
pub const TABLE2_LIPSCHITZ: [f64; 3] = [0.41, 0.27, 0.12];

const TABLE3: [(Flavor, [PublishedRow; 4]); 2] = [
    (
        Flavor::Generic,
        [
            row(13.3604, 0.0132, 14.1774, 0.0169),
            row(12.7905, 0.0332, 14.7496, 0.0407),
            row(12.0148, 0.0612, 15.8512, 0.0834),
            row(10.7872, 0.1005, 17.5326, 0.1504),
        ],
    ),
    (
        Flavor::Semigeneric,
        [
            row(13.7259, 0.0041, 13.8505, 0.0046),
            row(13.6984, 0.0053, 13.8801, 0.0059),
            row(13.6811, 0.0059, 13.9136, 0.0071),
            row(13.6686, 0.0065, 13.9459, 0.0078),
        ],
    ),
];

fn labelled(mut cfg: ExperimentConfig, name: &str) -> ExperimentConfig {
    cfg.label = Some(name.to_string());
    cfg
}

/// Every preset, in table order.
pub fn all_presets() -> Vec<Preset> {
    let mut out = Vec::new();
    for r in &TABLE1 {
        for (k, &n) in STEPS.iter().enumerate() {
            let name = format!("table1-{}-n{n}", r.tag);
            let mut cfg = funding_base(n);
            cfg.mode = r.mode;
            cfg.basis = r.basis;
            cfg.samples.reg = r.reg;
            if r.bermudan {
                cfg.payoff = PayoffConfig::CallSpreadMax {
                    k1: 95.0,
                    k2: 115.0,
                    exercise: Exercise::Bermudan,
                };
            }
            out.push(Preset {
                config: labelled(cfg, &name),
                name,
                published: Some(r.published[k]),
            });
        }
    }
    for (tag, delta, rows) in &TABLE2 {
        for (k, &n) in STEPS.iter().enumerate() {
            let name = format!("table2-{tag}-n{n}");
            out.push(Preset {
                config: labelled(credit_base(*delta, n), &name),
                name,
                published: Some(rows[k]),
            });
        }
    }
    for (flavor, rows) in &TABLE3 {
        for (k, &n) in STEPS.iter().enumerate() {
            let name = format!("table3-{}-n{n}", flavor.name());
            let mut cfg = funding_base(n);
            cfg.flavor = Some(*flavor);
            cfg.samples.outer = 1000;
            cfg.samples.inner = 1000;
            out.push(Preset {
                config: labelled(cfg, &name),
                name,
                published: Some(rows[k]),
            });
        }
    }
    let name = "figure1-n40".to_string();
    out.push(Preset {
        config: labelled(funding_base(40), &name),
        name,
        published: None,
    });
    out
}

pub fn preset(name: &str) -> Option<Preset> {
    all_presets().into_iter().find(|p| p.name == name)
}

pub fn preset_names() -> Vec<String> {
    all_presets().into_iter().map(|p| p.name).collect()
}

/// Rough single-core cost: inner evaluations times a per-evaluation cost
/// measured for each basis.
pub fn estimated_seconds(cfg: &ExperimentConfig) -> f64 {
    let per_eval = match (cfg.basis, &cfg.payoff) {
        (_, PayoffConfig::MinAsset { .. }) => 2.7e-6,
        (BasisPreset::Bermudan6, _) => 2.0e-5,
        (BasisPreset::Constant, _) => 3.0e-7,
        _ => 6.0e-6,
    };
    let steps = cfg.grid.steps as f64;
    per_eval
        * steps
        * (cfg.samples.outer as f64 * (cfg.samples.inner as f64 + 1.0) + cfg.samples.reg as f64)
}
