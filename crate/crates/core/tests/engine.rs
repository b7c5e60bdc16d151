use pdbsde_core::closed_form::{payoff_expectation, Quadrature};
use pdbsde_core::inputs::InnerMode;
use pdbsde_core::{
    fit, regression_paths, run_bounds, run_bounds_multi, Basis, BasisPreset, Driver, DualSolver,
    FitMode, Flavor, FundingParams, GbmModel, Payoff, PayoffKind, Problem, RunSettings, Simulator,
    TimeGrid, Truncation,
};

const KIND: PayoffKind = PayoffKind::CallSpreadMax {
    k1: 95.0,
    k2: 115.0,
};

fn problem(lending: f64, borrowing: f64, dim: usize, steps: usize) -> Problem {
    let grid = TimeGrid::uniform(0.25, steps).unwrap();
    let model = GbmModel::new(vec![100.0; dim], 0.05, 0.2).unwrap();
    let driver = Driver::funding(
        FundingParams {
            lending,
            borrowing,
            drift: 0.05,
            vol: 0.2,
        },
        dim,
    )
    .unwrap();
    let payoff = Payoff::european(KIND, steps);
    let basis = Basis::new(BasisPreset::Eu7, &payoff, &grid, &model, dim, 21).unwrap();
    let trunc = Truncation::from_lipschitz(&grid, dim, |_| driver.alpha_z_max());
    let sim = Simulator::new(model, grid, trunc).unwrap();
    Problem::new(sim, driver, payoff, basis).unwrap()
}

fn settings(outer: usize, inner: usize) -> RunSettings {
    RunSettings {
        seed: 3,
        outer,
        inner,
        solver: DualSolver::Picard,
    }
}

/// With equal rates the driver is linear and `Y_0` is the discounted
/// risk-neutral expectation of the payoff.
#[test]
fn equal_rates_reproduce_the_risk_neutral_price() {
    let r = 0.03;
    let p = problem(r, r, 2, 10);
    let q = Quadrature::gauss_legendre(64).unwrap();
    let exact = (-r * 0.25f64).exp()
        * payoff_expectation(&q, &KIND, &[100.0, 100.0], 0.25, r, 0.2, None).unwrap();
    let a = fit(&p, &regression_paths(&p, 1, 1000), FitMode::Mb).unwrap();
    let y0 = a.eval(&p, 0, &[100.0, 100.0]).unwrap().y;
    assert!((y0 - exact).abs() < 0.01 * exact, "fit {y0} vs {exact}");
    let run = run_bounds(&p, &a, Flavor::Convex, &settings(2000, 50)).unwrap();
    let ci = run.ci(InnerMode::Cv, true).unwrap();
    assert!(
        ci.mean_low - 4.0 * ci.se_low <= exact && exact <= ci.mean_up + 4.0 * ci.se_up,
        "{ci:?} vs {exact}"
    );
    assert!(ci.relative_gap() < 0.005, "{ci:?}");
    assert!(ci.contains(exact), "{ci:?} vs {exact}");
}

#[test]
fn envelope_bounds_are_wider_than_convex_ones() {
    let p = problem(0.01, 0.06, 2, 8);
    let a = fit(&p, &regression_paths(&p, 1, 500), FitMode::Mb).unwrap();
    let runs = run_bounds_multi(
        &p,
        &a,
        &[Flavor::Convex, Flavor::Semigeneric, Flavor::Generic],
        &settings(400, 40),
    )
    .unwrap();
    let cis: Vec<_> = runs
        .iter()
        .map(|r| r.ci(InnerMode::Cv, true).unwrap())
        .collect();
    let width = |k: usize| cis[k].mean_up - cis[k].mean_low;
    assert!(width(0) < width(1) && width(1) < width(2), "{cis:?}");
    for c in &cis {
        assert!(c.mean_low <= c.mean_up);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = problem(0.01, 0.06, 3, 6);
    let a = fit(&p, &regression_paths(&p, 2, 200), FitMode::Lgw).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            run_bounds_multi(
                &p,
                &a,
                &[Flavor::Convex, Flavor::Generic],
                &settings(97, 13),
            )
            .unwrap()
        })
    };
    let one = run(1);
    for t in [2, 3, 8] {
        assert_eq!(run(t), one, "{t} threads");
    }
    let fit_on = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| fit(&p, &regression_paths(&p, 2, 200), FitMode::Lgw).unwrap())
    };
    assert_eq!(fit_on(4), a);
}

#[test]
fn rejects_too_few_outer_paths_and_empty_flavor_lists() {
    let p = problem(0.01, 0.06, 1, 4);
    let a = fit(&p, &regression_paths(&p, 2, 50), FitMode::Lgw).unwrap();
    assert!(run_bounds(&p, &a, Flavor::Convex, &settings(1, 4)).is_err());
    assert!(run_bounds_multi(&p, &a, &[], &settings(4, 4)).is_err());
    assert!(run_bounds(&p, &a, Flavor::Concave, &settings(4, 4)).is_err());
}
