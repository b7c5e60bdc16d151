use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use pdbsde_cli::config::parse_config;
use pdbsde_cli::experiment::{fit_approximation, run_figure1, run_flavors, Report};
use pdbsde_cli::presets::{self, Preset, FIGURE1_INNER};
use pdbsde_cli::report::write_report;
use pdbsde_cli::{thread_count, with_threads, CliError, ExperimentConfig};
use pdbsde_core::oracle::{builtin_trees, solve_dp_exact, verify_pathwise_optimality};
use pdbsde_core::{Approximation, Flavor};

/// Primal-dual Monte Carlo bounds for discrete reflected BSDEs.
#[derive(Parser)]
#[command(name = "pdbsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the input approximation and write it as JSON.
    Fit(Common),
    /// Lower and upper bounds, optionally from a stored approximation.
    Bounds(BoundsArgs),
    /// Fit, bounds and the 95% interval; prints the interval.
    Ci(Common),
    /// Exactness checks on the built-in finite trees.
    OracleCheck {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Funding example rows (n = 40 unless `--all-steps` or `--preset`).
    Table1(TableArgs),
    /// Credit example rows.
    Table2(TableArgs),
    /// Generic against semigeneric envelopes.
    Table3(TableArgs),
    /// Upper bounds with and without the inner control variate against Λin.
    Figure1(Common),
    /// List presets with their estimated single-core runtime.
    Presets,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Override Λreg.
    #[arg(long)]
    reg: Option<usize>,
    /// Override Λout.
    #[arg(long)]
    outer: Option<usize>,
    /// Override Λin.
    #[arg(long)]
    inner: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    /// Approximation written by `fit`.
    #[arg(long)]
    approx: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    all_steps: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => parse_config(&fs::read_to_string(path)?)?,
            (None, Some(name)) => find_preset(name)?.config,
            (None, None) => return Err(CliError::Usage("need --config or --preset".into())),
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "--config and --preset are exclusive".into(),
                ))
            }
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.reg {
            cfg.samples.reg = v;
        }
        if let Some(v) = self.outer {
            cfg.samples.outer = v;
        }
        if let Some(v) = self.inner {
            cfg.samples.inner = v;
        }
        if let Some(d) = &self.out {
            cfg.output.dir = Some(d.display().to_string());
        }
        cfg.validate()?;
        Ok(())
    }

    fn threads(&self) -> Result<Option<usize>, CliError> {
        thread_count(self.threads)
    }
}

fn find_preset(name: &str) -> Result<Preset, CliError> {
    presets::preset(name)
        .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`; see `pdbsde presets`")))
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| "reports".into()))
}

fn emit(cfg: &ExperimentConfig, report: &Report) -> Result<(), CliError> {
    for path in write_report(&out_dir(cfg), &cfg.name(), report)? {
        info!("wrote {}", path.display());
    }
    for r in &report.rows {
        println!(
            "{}: low {:.4} ({:.4})  up {:.4} ({:.4})  95% CI [{:.4}, {:.4}]",
            r.label, r.low, r.se_low, r.up, r.se_up, r.ci_lo, r.ci_hi
        );
    }
    Ok(())
}

fn table(prefix: &str, args: &TableArgs) -> Result<(), CliError> {
    let names: Vec<String> = match &args.common.preset {
        Some(name) if name.starts_with(prefix) => vec![name.clone()],
        Some(name) => {
            return Err(CliError::Usage(format!(
                "`{name}` is not a {prefix} preset"
            )))
        }
        None => presets::preset_names()
            .into_iter()
            .filter(|n| n.starts_with(prefix) && (args.all_steps || n.ends_with("-n40")))
            .collect(),
    };
    let threads = args.common.threads()?;
    let mut done = Vec::new();
    for name in names {
        let mut cfg = find_preset(&name)?.config;
        args.common.apply(&mut cfg)?;
        let flavors: Vec<Flavor> = if prefix == "table3" && args.common.preset.is_none() {
            // both envelope flavours share one pass; the semigeneric preset
            // of the same n is then redundant
            let tag = name.rsplit('-').next().unwrap_or_default().to_string();
            if done.contains(&tag) {
                continue;
            }
            done.push(tag.clone());
            cfg.label = Some(format!("table3-{tag}"));
            vec![Flavor::Generic, Flavor::Semigeneric]
        } else {
            Vec::new()
        };
        info!(
            "{name}: estimated {:.0} s single-core",
            presets::estimated_seconds(&cfg)
        );
        let report = with_threads(threads, || run_flavors(&cfg, &flavors, None))??;
        emit(&cfg, &report)?;
    }
    Ok(())
}

fn read_approx(path: &Path) -> Result<Approximation, CliError> {
    Ok(Approximation::from_json(&fs::read_to_string(path)?)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(c) => {
            let cfg = c.load()?;
            let a = with_threads(c.threads()?, || -> Result<_, CliError> {
                let p = cfg.problem()?;
                fit_approximation(&cfg, &p)
            })??;
            let dir = out_dir(&cfg);
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.approx.json", cfg.name()));
            fs::write(&path, a.to_json()?)?;
            println!("{}", path.display());
        }
        Command::Bounds(b) => {
            let cfg = b.common.load()?;
            let approx = b.approx.as_deref().map(read_approx).transpose()?;
            let report = with_threads(b.common.threads()?, || run_flavors(&cfg, &[], approx))??;
            emit(&cfg, &report)?;
        }
        Command::Ci(c) => {
            let cfg = c.load()?;
            let report = with_threads(c.threads()?, || run_flavors(&cfg, &[], None))??;
            emit(&cfg, &report)?;
        }
        Command::OracleCheck { tol } => {
            let mut failed = Vec::new();
            for tree in builtin_trees()? {
                let sol = solve_dp_exact(&tree)?;
                let rep = verify_pathwise_optimality(&tree, &sol)?;
                let ok = rep.passes(tol);
                println!(
                    "{} {}: Y0 = {:.12}, {} paths, worst deviation {:.3e}",
                    if ok { "PASS" } else { "FAIL" },
                    tree.name,
                    rep.y0,
                    rep.paths,
                    rep.worst()
                );
                if !ok {
                    failed.push(tree.name.clone());
                }
            }
            if !failed.is_empty() {
                return Err(pdbsde_core::Error::Invariant(format!(
                    "oracle identities fail on {}",
                    failed.join(", ")
                ))
                .into());
            }
        }
        Command::Table1(t) => table("table1", &t)?,
        Command::Table2(t) => table("table2", &t)?,
        Command::Table3(t) => table("table3", &t)?,
        Command::Figure1(c) => {
            let cfg = if c.config.is_none() && c.preset.is_none() {
                let mut cfg = find_preset("figure1-n40")?.config;
                c.apply(&mut cfg)?;
                cfg
            } else {
                c.load()?
            };
            let report = with_threads(c.threads()?, || run_figure1(&cfg, &FIGURE1_INNER))??;
            emit(&cfg, &report)?;
            for p in report.figure.iter().flatten() {
                println!(
                    "inner {}: plain_up {:.4}  cv_up {:.4}  low {:.4}",
                    p.inner, p.plain_up, p.cv_up, p.low
                );
            }
        }
        Command::Presets => {
            for p in presets::all_presets() {
                println!(
                    "{:32} ~{:>6.0} s",
                    p.name,
                    presets::estimated_seconds(&p.config)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
