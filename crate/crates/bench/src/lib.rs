//! Fixtures shared by the criterion benches.

use pdbsde_core::{
    fit, regression_paths, Approximation, Basis, BasisPreset, Driver, FitMode, FundingParams,
    GbmModel, Payoff, PayoffKind, Problem, Simulator, TimeGrid, Truncation,
};

pub const FUNDING: FundingParams = FundingParams {
    lending: 0.01,
    borrowing: 0.06,
    drift: 0.05,
    vol: 0.2,
};

/// Call spread on the maximum of `dim` assets under the funding driver.
pub fn funding_problem(dim: usize, steps: usize) -> Problem {
    let grid = TimeGrid::uniform(0.25, steps).unwrap();
    let model = GbmModel::new(vec![100.0; dim], FUNDING.drift, FUNDING.vol).unwrap();
    let driver = Driver::funding(FUNDING, dim).unwrap();
    let payoff = Payoff::european(
        PayoffKind::CallSpreadMax {
            k1: 95.0,
            k2: 115.0,
        },
        steps,
    );
    let basis = Basis::new(BasisPreset::Eu7, &payoff, &grid, &model, dim, 21).unwrap();
    let trunc = Truncation::from_lipschitz(&grid, dim, |_| driver.alpha_z_max());
    Problem::new(
        Simulator::new(model, grid, trunc).unwrap(),
        driver,
        payoff,
        basis,
    )
    .unwrap()
}

pub fn fitted(p: &Problem, reg: usize) -> Approximation {
    fit(p, &regression_paths(p, 1, reg), FitMode::Mb).unwrap()
}
