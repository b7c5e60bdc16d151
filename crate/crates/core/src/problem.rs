//! A fully specified discrete-time problem: simulation setup, driver, barrier
//! and the regression basis used for the input approximations.

use crate::closed_form::Basis;
use crate::error::{invalid, Result};
use crate::generator::Driver;
use crate::payoff::{Barrier, Payoff};
use crate::sim::Simulator;

#[derive(Debug, Clone)]
pub struct Problem {
    pub sim: Simulator,
    pub driver: Driver,
    pub payoff: Payoff,
    pub basis: Basis,
}

impl Problem {
    /// Checks that the pieces fit together and that every step satisfies the
    /// step-size relations for the driver's Lipschitz profile.
    pub fn new(sim: Simulator, driver: Driver, payoff: Payoff, basis: Basis) -> Result<Self> {
        let n = sim.steps();
        if payoff.steps() != n || basis.steps() != n {
            return Err(invalid(
                "steps",
                "grid, payoff and basis must share the step count",
            ));
        }
        let zd = driver.z_dim();
        if zd != 0 && zd != sim.dim() {
            return Err(invalid(
                "driver",
                format!("z dimension {zd} does not match {} assets", sim.dim()),
            ));
        }
        if basis.z_dim() != zd {
            return Err(invalid(
                "basis",
                "basis z dimension differs from the driver's",
            ));
        }
        for i in 0..n {
            driver.check_step(sim.grid.delta(i), sim.truncation.level(i))?;
        }
        Ok(Self {
            sim,
            driver,
            payoff,
            basis,
        })
    }

    pub fn steps(&self) -> usize {
        self.sim.steps()
    }

    pub fn dim(&self) -> usize {
        self.sim.dim()
    }

    /// Dimension of the `z`-argument of the driver; zero when the driver
    /// ignores `z`, in which case the weights never enter any recursion.
    pub fn z_dim(&self) -> usize {
        self.driver.z_dim()
    }

    pub fn delta(&self, i: usize) -> f64 {
        self.sim.grid.delta(i)
    }

    pub fn barrier(&self, i: usize, x: &[f64]) -> Barrier {
        self.payoff.barrier(i, x)
    }
}
