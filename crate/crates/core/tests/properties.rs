//! Randomised invariants of the driver, envelope, solver and estimator
//! layers. Each property runs on 10 000 generated cases.

use pdbsde_core::generator::{CreditParams, Driver, Envelope, FundingParams, Side};
use pdbsde_core::inputs::{inner_estimates, Expectations, PathInput, StepInput};
use pdbsde_core::lower::{gamma_factors, Controls};
use pdbsde_core::oracle::{builtin_tree, check_error_bounds, solve_dp_exact, Perturbation};
use pdbsde_core::payoff::Barrier;
use pdbsde_core::sim::{GbmModel, Simulator, TimeGrid, Truncation};
use proptest::prelude::*;

const PROBES: u32 = 10_000;
const TOL: f64 = 1e-9;

fn funding_params() -> impl Strategy<Value = FundingParams> {
    (0.0..0.05f64, 0.0..0.1f64, -0.1..0.2f64, 0.05..0.5f64).prop_map(
        |(lending, spread, drift, vol)| FundingParams {
            lending,
            borrowing: lending + spread,
            drift,
            vol,
        },
    )
}

fn credit_params() -> impl Strategy<Value = CreditParams> {
    (
        0.0..0.1f64,
        0.0..0.99f64,
        10.0..80.0f64,
        1.0..50.0f64,
        0.0..0.1f64,
        0.01..0.5f64,
    )
        .prop_map(
            |(rate, recovery, v_high, width, gamma_low, jump)| CreditParams {
                rate,
                recovery,
                v_high,
                v_low: v_high + width,
                gamma_high: gamma_low + jump,
                gamma_low,
            },
        )
}

fn driver() -> impl Strategy<Value = Driver> {
    prop_oneof![
        (funding_params(), 1..=5usize).prop_map(|(p, d)| Driver::funding(p, d).unwrap()),
        (funding_params(), 1..=5usize)
            .prop_map(|(p, d)| Driver::mirrored(Driver::funding(p, d).unwrap())),
        credit_params().prop_map(|p| Driver::credit(p).unwrap()),
    ]
}

fn point(dim: usize) -> impl Strategy<Value = (f64, Vec<f64>)> {
    (-200.0..200.0f64, prop::collection::vec(-50.0..50.0f64, dim))
}

fn driver_with_points() -> impl Strategy<Value = (Driver, (f64, Vec<f64>), (f64, Vec<f64>))> {
    driver().prop_flat_map(|d| {
        let dim = d.z_dim();
        (Just(d), point(dim), point(dim))
    })
}

fn funding_with_points() -> impl Strategy<Value = (Driver, (f64, Vec<f64>), (f64, Vec<f64>))> {
    (funding_params(), 1..=5usize).prop_flat_map(|(p, dim)| {
        (
            Just(Driver::funding(p, dim).unwrap()),
            point(dim),
            point(dim),
        )
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn scale(v: f64) -> f64 {
    v.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: PROBES,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn driver_is_lipschitz((d, (y1, z1), (y2, z2)) in driver_with_points()) {
        let gap = (d.eval(y1, &z1) - d.eval(y2, &z2)).abs();
        let bound = d.alpha_y() * (y1 - y2).abs()
            + (0..d.z_dim()).map(|k| d.alpha_z(k) * (z1[k] - z2[k]).abs()).sum::<f64>();
        prop_assert!(gap <= bound + TOL * scale(bound), "{gap} > {bound}");
    }

    #[test]
    fn subgradient_supports_the_driver((d, (y, z), (y2, z2)) in funding_with_points()) {
        let g = d.subgradient(y, &z).unwrap();
        let f = d.eval(y, &z);
        let support = f + g.r * (y2 - y) + dot(&g.rho, &z2) - dot(&g.rho, &z);
        let f2 = d.eval(y2, &z2);
        prop_assert!(f2 >= support - TOL * scale(f2), "{f2} < {support}");
        let conj = g.r * y + dot(&g.rho, &z) - f;
        prop_assert!((conj - g.conj).abs() <= TOL * scale(f));
        // Fenchel–Young in y, with equality at the point of contact
        let fy = d.conjugate_y(g.r, &z).unwrap();
        prop_assert!((fy - (g.r * y - f)).abs() <= TOL * scale(f));
        prop_assert!(fy >= g.r * y2 - d.eval(y2, &z) - TOL * scale(fy));
    }

    #[test]
    fn mirrored_subgradient_supports_minus_f((p, dim) in (funding_params(), 1..=5usize),
                                             (y, y2) in (-200.0..200.0f64, -200.0..200.0f64),
                                             s in 0.0..50.0f64) {
        let d = Driver::mirrored(Driver::funding(p, dim).unwrap());
        let z = vec![s; dim];
        let z2 = vec![-s / 2.0; dim];
        let g = d.neg_subgradient(y, &z).unwrap();
        let support = -d.eval(y, &z) + g.r * (y2 - y) + dot(&g.rho, &z2) - dot(&g.rho, &z);
        let v = -d.eval(y2, &z2);
        prop_assert!(v >= support - TOL * scale(v));
    }

    #[test]
    fn gamma_weights_stay_non_negative((p, dim) in (funding_params(), 1..=5usize),
                                       delta in 1e-3..0.5f64,
                                       seeds in prop::collection::vec((-200.0..200.0f64, -50.0..50.0f64, -1.0..1.0f64), 1..6)) {
        let d = Driver::funding(p, dim).unwrap();
        let c = 1.0 / (dim as f64 * d.alpha_z_max() * delta);
        let mut ctrl = Controls::default();
        let mut steps = Vec::new();
        for (k, &(y, z, b)) in seeds.iter().enumerate() {
            let zv: Vec<f64> = (0..dim).map(|e| z * (1.0 + e as f64 / 7.0)).collect();
            let beta: Vec<f64> = (0..dim).map(|e| c * if (k + e) % 2 == 0 { b } else { -b }).collect();
            let g = d.subgradient(y, &zv).unwrap();
            ctrl.r.push(g.r);
            ctrl.rho.push(g.rho);
            ctrl.conj.push(g.conj);
            steps.push(StepInput {
                delta,
                barrier: Barrier::MinusInfinity,
                y,
                q: y,
                z: zv,
                beta,
                y_next: y,
                plain: Expectations::default(),
                cv: Expectations::default(),
            });
        }
        let input = PathInput { steps, terminal: 0.0 };
        for g in gamma_factors(&input, &ctrl).unwrap() {
            prop_assert!(g >= -1e-15, "Γ = {g}");
        }
    }

    #[test]
    fn picard_contracts_at_rate_alpha_delta((d, (a, z), _) in driver_with_points(), frac in 0.01..0.5f64) {
        let alpha = d.alpha_y();
        let delta = if alpha > 0.0 { frac / alpha } else { frac };
        let trace = d.solve_implicit(0, a, &z, delta).unwrap();
        let rate = alpha * delta;
        for w in trace.steps.windows(2) {
            prop_assert!(w[1] <= rate * w[0] * (1.0 + 1e-9) + 1e-12 * scale(a), "{:?} at rate {rate}", trace.steps);
        }
        let v = trace.value;
        prop_assert!((v - a - d.eval(v, &z) * delta).abs() <= 1e-10 * scale(v));
        let exact = d.fixed_point(0, a, &z, delta).unwrap();
        prop_assert!((exact - v).abs() <= 1e-10 * scale(v), "{exact} vs {v}");
    }

    #[test]
    fn envelopes_bound_increments((d, (ty, tz), (y, z)) in driver_with_points(), semi in any::<bool>()) {
        let envs = match (&d, semi) {
            (Driver::Funding { params, .. }, true) => (Envelope::Semigeneric(Side::Up, *params), Envelope::Semigeneric(Side::Low, *params)),
            _ => (Envelope::Generic(Side::Up), Envelope::Generic(Side::Low)),
        };
        let dz: Vec<f64> = tz.iter().zip(&z).map(|(a, b)| a - b).collect();
        let gap = d.eval(y, &z) - d.eval(ty, &tz);
        let up = envs.0.eval(&d, ty, &tz, ty - y, &dz);
        let low = envs.1.eval(&d, ty, &tz, ty - y, &dz);
        prop_assert!(up >= gap - TOL * scale(gap), "{up} < {gap}");
        prop_assert!(low <= gap + TOL * scale(gap), "{low} > {gap}");
    }
}

/// Mean of the control-variate estimates over many independent clouds
/// against the closed-form conditional moments of a linear `ỹ`.
#[test]
fn control_variate_estimates_are_unbiased() {
    let (x0, mu, vol) = ([100.0, 90.0], 0.05, 0.2);
    let grid = TimeGrid::uniform(0.25, 10).unwrap();
    let delta = grid.delta(0);
    let sim = Simulator::new(
        GbmModel::new(x0.to_vec(), mu, vol).unwrap(),
        grid,
        Truncation::none(10),
    )
    .unwrap();
    let moments = sim.moments(0);
    let growth = (mu * delta).exp();
    let coef = [1.0, 2.0];
    let exact_y = (coef[0] * x0[0] + coef[1] * x0[1]) * growth;
    let exact_by = [
        coef[0] * x0[0] * vol * growth,
        coef[1] * x0[1] * vol * growth,
    ];
    // deliberately poor control weights; unbiasedness must not depend on them
    let (q, z) = (250.0, [5.0, -30.0]);
    let clouds = PROBES as u64;
    let inner = 16;
    let mut acc = [[0.0; 2]; 3];
    for l in 0..clouds {
        let cloud = sim.simulate_inner(7, l, 0, &x0, inner);
        let values: Vec<f64> = (0..inner).map(|k| dot(&coef, cloud.next_x(k))).collect();
        let (plain, cv) = inner_estimates(&values, &cloud, &moments, q, &z).unwrap();
        let errs = [
            cv.y - exact_y,
            cv.by[0] - exact_by[0],
            cv.by[1] - exact_by[1],
        ];
        for (a, e) in acc.iter_mut().zip(errs) {
            a[0] += e;
            a[1] += e * e;
        }
        assert!(plain.y.is_finite());
    }
    let n = clouds as f64;
    for (k, a) in acc.iter().enumerate() {
        let mean = a[0] / n;
        let se = ((a[1] / n - mean * mean) / (n - 1.0)).sqrt();
        assert!(
            mean.abs() <= 4.0 * se,
            "component {k}: bias {mean} with se {se}"
        );
    }
}

/// The a-priori error estimates on flat convex trees for 10 000 random
/// perturbations of the inputs.
#[test]
fn error_estimates_hold_for_random_perturbations() {
    let names = ["funding_flat_berm4", "funding_flat_eu3"];
    let mut checked = 0;
    for name in names {
        let tree = builtin_tree(name).unwrap();
        let sol = solve_dp_exact(&tree).unwrap();
        for seed in 0..(PROBES as u64) / names.len() as u64 {
            let size = 0.01 * (1 + seed % 400) as f64;
            let r =
                check_error_bounds(&tree, &sol, &Perturbation::random(&tree, seed, size)).unwrap();
            assert!(r.holds(1e-10), "{name} seed {seed}: {r:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, PROBES);
}
