//! Reflecting barrier `S_i = G_i(X_i)` with an explicit exercise set.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Barrier value at one date: a finite payoff on exercise dates, otherwise
/// the absorbing lower value `−∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Barrier {
    Value(f64),
    MinusInfinity,
}

impl Barrier {
    pub fn value(self) -> Option<f64> {
        match self {
            Barrier::Value(v) => Some(v),
            Barrier::MinusInfinity => None,
        }
    }

    /// `max(S, v)`.
    #[inline]
    pub fn reflect(self, v: f64) -> f64 {
        match self {
            Barrier::Value(s) => s.max(v),
            Barrier::MinusInfinity => v,
        }
    }

    /// `S ≥ v`; never true off the exercise set.
    #[inline]
    pub fn at_least(self, v: f64) -> bool {
        match self {
            Barrier::Value(s) => s >= v,
            Barrier::MinusInfinity => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffKind {
    /// `(max x − K1)_+ − 2 (max x − K2)_+`.
    CallSpreadMax {
        k1: f64,
        k2: f64,
    },
    MinAsset,
    /// `(max x − K)_+`.
    MaxCall {
        strike: f64,
    },
    Constant {
        value: f64,
    },
}

impl PayoffKind {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PayoffKind::CallSpreadMax { k1, k2 } => {
                let m = max_of(x);
                (m - k1).max(0.0) - 2.0 * (m - k2).max(0.0)
            }
            PayoffKind::MinAsset => x.iter().copied().fold(f64::INFINITY, f64::min),
            PayoffKind::MaxCall { strike } => (max_of(x) - strike).max(0.0),
            PayoffKind::Constant { value } => *value,
        }
    }
}

pub fn max_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub kind: PayoffKind,
    exercise: Vec<usize>,
    steps: usize,
}

impl Payoff {
    /// `exercise` must be sorted, inside `0..=steps`, and contain `steps`.
    pub fn new(kind: PayoffKind, mut exercise: Vec<usize>, steps: usize) -> Result<Self> {
        exercise.sort_unstable();
        exercise.dedup();
        if exercise.last() != Some(&steps) {
            return Err(invalid(
                "exercise",
                "the terminal date must be an exercise date",
            ));
        }
        Ok(Self {
            kind,
            exercise,
            steps,
        })
    }

    pub fn european(kind: PayoffKind, steps: usize) -> Self {
        Self {
            kind,
            exercise: vec![steps],
            steps,
        }
    }

    pub fn bermudan(kind: PayoffKind, steps: usize) -> Result<Self> {
        Self::new(kind, bermudan_exercise_set(steps)?, steps)
    }

    pub fn exercise_dates(&self) -> &[usize] {
        &self.exercise
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_exercise(&self, i: usize) -> bool {
        self.exercise.binary_search(&i).is_ok()
    }

    pub fn barrier(&self, i: usize, x: &[f64]) -> Barrier {
        if self.is_exercise(i) {
            Barrier::Value(self.kind.eval(x))
        } else {
            Barrier::MinusInfinity
        }
    }

    /// `G_n(x)`.
    pub fn terminal(&self, x: &[f64]) -> f64 {
        self.kind.eval(x)
    }
}

/// Four equidistant dates `{n/4, n/2, 3n/4, n}`.
pub fn bermudan_exercise_set(steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps % 4 != 0 {
        return Err(invalid(
            "steps",
            format!("Bermudan exercise needs a step count divisible by 4, got {steps}"),
        ));
    }
    Ok((1..=4).map(|k| k * steps / 4).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spread() -> PayoffKind {
        PayoffKind::CallSpreadMax {
            k1: 95.0,
            k2: 115.0,
        }
    }

    #[test]
    fn call_spread_values() {
        assert_eq!(spread().eval(&[100.0, 80.0]), 5.0);
        assert_eq!(spread().eval(&[90.0, 120.0]), 15.0);
        assert_eq!(spread().eval(&[90.0, 60.0]), 0.0);
        assert_eq!(PayoffKind::MinAsset.eval(&[90.0, 60.0, 70.0]), 60.0);
    }

    #[test]
    fn barrier_off_exercise_set() {
        let p = Payoff::european(spread(), 40);
        assert_eq!(p.barrier(39, &[120.0]), Barrier::MinusInfinity);
        assert_eq!(p.barrier(40, &[120.0]), Barrier::Value(15.0));
        assert_eq!(Barrier::MinusInfinity.reflect(-3.0), -3.0);
        assert_eq!(Barrier::Value(1.0).reflect(-3.0), 1.0);
        assert!(!Barrier::MinusInfinity.at_least(f64::MIN));
    }

    #[test]
    fn bermudan_sets() {
        assert_eq!(bermudan_exercise_set(40).unwrap(), vec![10, 20, 30, 40]);
        assert_eq!(bermudan_exercise_set(4).unwrap(), vec![1, 2, 3, 4]);
        assert!(bermudan_exercise_set(42).is_err());
        assert_eq!(Payoff::european(spread(), 40).exercise_dates(), &[40]);
        assert!(Payoff::new(spread(), vec![1, 2], 4).is_err());
    }
}
