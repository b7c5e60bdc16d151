use approx::assert_relative_eq;
use pdbsde_core::generator::{Driver, Envelope, FundingParams, Side};
use pdbsde_core::inputs::InnerMode;
use pdbsde_core::lower::{
    controls_along_path, stopping_time, theta_low_convex, theta_low_h, Controls,
};
use pdbsde_core::oracle::{
    builtin_tree, builtin_trees, check_error_bounds, error_bound_constants, path_input,
    solve_dp_exact, verify_pathwise_optimality, ExactTree, Perturbation, Transition, TreeNode,
};
use pdbsde_core::upper::{theta_up_convex, theta_up_h, vartheta_up_with, DualSolver};

fn fixtures() -> Vec<ExactTree> {
    builtin_trees().unwrap()
}

fn fixture(name: &str) -> ExactTree {
    builtin_tree(name).unwrap()
}

fn funding_params() -> FundingParams {
    FundingParams {
        lending: 0.01,
        borrowing: 0.06,
        drift: 0.05,
        vol: 0.2,
    }
}

fn one_step(driver: Driver, delta: f64, outcomes: &[(f64, f64)]) -> ExactTree {
    ExactTree {
        name: "one_step".into(),
        deltas: vec![delta],
        driver,
        nodes: vec![
            vec![TreeNode {
                x: vec![],
                payoff: None,
                children: outcomes
                    .iter()
                    .enumerate()
                    .map(|(k, &(p, _))| Transition {
                        to: k,
                        p,
                        beta: vec![],
                    })
                    .collect(),
            }],
            outcomes
                .iter()
                .map(|&(_, s)| TreeNode {
                    x: vec![],
                    payoff: Some(s),
                    children: vec![],
                })
                .collect(),
        ],
    }
}

#[test]
fn fixtures_cover_both_drivers() {
    let trees = fixtures();
    assert!(trees.len() >= 5);
    assert!(
        trees
            .iter()
            .filter(|t| matches!(t.driver, Driver::Funding { .. }))
            .count()
            >= 2
    );
    assert!(
        trees
            .iter()
            .filter(|t| matches!(t.driver, Driver::Credit { .. }))
            .count()
            >= 2
    );
    for t in &trees {
        assert!(t.steps() <= 4);
        let again = ExactTree::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(&again, t);
    }
}

#[test]
fn pathwise_identities_hold_on_every_fixture() {
    for tree in fixtures() {
        let sol = solve_dp_exact(&tree).unwrap();
        let report = verify_pathwise_optimality(&tree, &sol).unwrap();
        assert!(report.passes(1e-10), "{}: {report:?}", tree.name);
        assert!(report.checks.iter().any(|c| c.name == "theta_up"));
    }
}

#[test]
fn funding_fixtures_exercise_both_rate_branches() {
    let tree = fixture("funding_2d_berm4");
    let sol = solve_dp_exact(&tree).unwrap();
    let (mut borrow, mut lend) = (0, 0);
    for i in 0..tree.steps() {
        for k in 0..tree.nodes[i].len() {
            let sz: f64 = sol.z[i][k].iter().sum();
            if sol.y[i][k] <= sz / 0.2 {
                borrow += 1;
            } else {
                lend += 1;
            }
        }
    }
    assert!(borrow > 0 && lend > 0, "{borrow} / {lend}");
}

#[test]
fn zero_driver_gives_expected_payoff() {
    let tree = one_step(Driver::Zero { dim: 0 }, 0.5, &[(0.25, 4.0), (0.75, 8.0)]);
    assert_eq!(solve_dp_exact(&tree).unwrap().y0(), 7.0);
}

#[test]
fn linear_driver_one_step() {
    let tree = one_step(Driver::linear(0.1, vec![]), 1.0, &[(0.5, 6.0), (0.5, 14.0)]);
    let y0 = solve_dp_exact(&tree).unwrap().y0();
    assert_relative_eq!(y0, 10.0 / 1.1, epsilon = 1e-14);
}

/// Independent recursion: bisection on `y − a − f(y, z)Δ` with `f` written
/// out by hand.
fn brute_funding(tree: &ExactTree) -> f64 {
    let p = funding_params();
    let f = |y: f64, z: f64| {
        -p.lending * y - (p.drift - p.lending) / p.vol * z
            + (p.borrowing - p.lending) * (z / p.vol - y).max(0.0)
    };
    let n = tree.steps();
    let mut values: Vec<f64> = tree.nodes[n].iter().map(|nd| nd.payoff.unwrap()).collect();
    for i in (0..n).rev() {
        let dt = tree.deltas[i];
        values = tree.nodes[i]
            .iter()
            .map(|nd| {
                let a: f64 = nd.children.iter().map(|c| c.p * values[c.to]).sum();
                let z: f64 = nd
                    .children
                    .iter()
                    .map(|c| c.p * c.beta[0] * values[c.to])
                    .sum();
                let (mut lo, mut hi) = (a - 1e3, a + 1e3);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid - a - f(mid, z) * dt > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let cont = 0.5 * (lo + hi);
                nd.payoff.map_or(cont, |s| s.max(cont))
            })
            .collect();
    }
    values[0]
}

#[test]
fn funding_binomial_matches_independent_recursion() {
    let tree = fixture("funding_binomial_eu2");
    let y0 = solve_dp_exact(&tree).unwrap().y0();
    assert_relative_eq!(y0, brute_funding(&tree), epsilon = 1e-12);
    // frozen from the bisection recursion above
    assert_relative_eq!(y0, 5.966137736598803, epsilon = 1e-12);
    let tree = fixture("funding_trinomial_berm3");
    assert_relative_eq!(
        solve_dp_exact(&tree).unwrap().y0(),
        brute_funding(&tree),
        epsilon = 1e-12
    );
}

#[test]
fn optimal_stopping_matches_fitted_stopping_rule() {
    for tree in fixtures() {
        let sol = solve_dp_exact(&tree).unwrap();
        let triples = sol.triples();
        for path in tree.paths() {
            let input = path_input(&tree, &triples, &path);
            assert_eq!(stopping_time(&tree.driver, &input), sol.tau_star(&path));
        }
    }
}

/// `|S − continuation|` at node `(i, k)`.
fn gap(tree: &ExactTree, sol: &pdbsde_core::oracle::ExactSolution, i: usize, k: usize) -> f64 {
    let cont = tree
        .driver
        .fixed_point(i, sol.q[i][k], &sol.z[i][k], tree.deltas[i])
        .unwrap();
    (tree.nodes[i][k].payoff.unwrap() - cont).abs()
}

#[test]
fn corrupted_martingale_strictly_raises_the_upper_bound() {
    for name in [
        "funding_trinomial_berm3",
        "funding_2d_berm4",
        "credit_trinomial_berm3",
    ] {
        let tree = fixture(name);
        let sol = solve_dp_exact(&tree).unwrap();
        let triples = sol.triples();
        let paths = tree.paths();
        // the exercise node whose payoff is closest to its continuation value
        let (i, k) = (1..tree.steps())
            .flat_map(|i| (0..tree.nodes[i].len()).map(move |k| (i, k)))
            .filter(|&(i, k)| tree.nodes[i][k].payoff.is_some())
            .min_by(|a, b| gap(&tree, &sol, a.0, a.1).total_cmp(&gap(&tree, &sol, b.0, b.1)))
            .unwrap();
        let size = 0.1f64.max(10.0 * gap(&tree, &sol, i, k));
        // `size` on the first transition out of (i, k), compensated across the
        // siblings so that the perturbation stays a martingale
        let share = size * tree.nodes[i][k].children[0].p;
        let mean = tree
            .expect(&paths, |_, path| {
                let mut input = path_input(&tree, &triples, path);
                if path.nodes[i] == k {
                    let eps = if path.moves[i] == 0 {
                        size - share
                    } else {
                        -share
                    };
                    input.steps[i].plain.y -= eps;
                }
                Ok(theta_up_convex(&tree.driver, &input, InnerMode::Plain, DualSolver::Picard)?[0])
            })
            .unwrap();
        assert!(mean > sol.y0() + 1e-9, "{name}: {mean} vs {}", sol.y0());
    }
}

#[test]
fn bounds_bracket_the_solution_for_perturbed_inputs() {
    for tree in fixtures() {
        let sol = solve_dp_exact(&tree).unwrap();
        let paths = tree.paths();
        let envs = pdbsde_core::oracle::envelopes_for(&tree.driver);
        for seed in 0..20 {
            let approx = sol.triples().perturbed(seed, 0.5);
            let inputs: Vec<_> = paths
                .iter()
                .map(|p| path_input(&tree, &approx, p))
                .collect();
            let up = tree
                .expect(&paths, |l, _| {
                    Ok(theta_up_convex(
                        &tree.driver,
                        &inputs[l],
                        InnerMode::Plain,
                        DualSolver::Picard,
                    )?[0])
                })
                .unwrap();
            assert!(
                up >= sol.y0() - 1e-10,
                "{} seed {seed}: up {up} < {}",
                tree.name,
                sol.y0()
            );
            for (name, hu, hl) in &envs {
                let up = tree
                    .expect(&paths, |l, _| {
                        Ok(theta_up_h(&tree.driver, hu, &inputs[l], InnerMode::Plain)?[0])
                    })
                    .unwrap();
                let low = tree
                    .expect(&paths, |l, _| {
                        let tau = stopping_time(&tree.driver, &inputs[l]);
                        Ok(theta_low_h(&tree.driver, hl, &inputs[l], InnerMode::Plain, tau)?[0])
                    })
                    .unwrap();
                assert!(up >= sol.y0() - 1e-10, "{} {name}: {up}", tree.name);
                assert!(low <= sol.y0() + 1e-10, "{} {name}: {low}", tree.name);
            }
            if tree.driver.shape().is_convex() {
                let low = tree
                    .expect(&paths, |l, _| {
                        let ctrl = controls_along_path(&tree.driver, &inputs[l], false)?;
                        theta_low_convex(
                            &inputs[l],
                            stopping_time(&tree.driver, &inputs[l]),
                            &ctrl,
                            None,
                        )
                    })
                    .unwrap();
                assert!(low <= sol.y0() + 1e-10, "{}: low {low}", tree.name);
            }
        }
    }
}

#[test]
fn generic_envelope_is_cruder_than_semigeneric() {
    let tree = fixture("funding_2d_berm4");
    let sol = solve_dp_exact(&tree).unwrap();
    let approx = sol.triples().perturbed(3, 1.0);
    let paths = tree.paths();
    let Driver::Funding { params, .. } = tree.driver else {
        unreachable!()
    };
    let mean = |env: &Envelope, up: bool| {
        tree.expect(&paths, |_, p| {
            let input = path_input(&tree, &approx, p);
            if up {
                Ok(theta_up_h(&tree.driver, env, &input, InnerMode::Plain)?[0])
            } else {
                let tau = stopping_time(&tree.driver, &input);
                Ok(theta_low_h(&tree.driver, env, &input, InnerMode::Plain, tau)?[0])
            }
        })
        .unwrap()
    };
    let gen_up = mean(&Envelope::Generic(Side::Up), true);
    let semi_up = mean(&Envelope::Semigeneric(Side::Up, params), true);
    let gen_low = mean(&Envelope::Generic(Side::Low), false);
    let semi_low = mean(&Envelope::Semigeneric(Side::Low, params), false);
    assert!(
        gen_up > semi_up && semi_up >= sol.y0(),
        "{gen_up} {semi_up}"
    );
    assert!(
        gen_low < semi_low && semi_low <= sol.y0(),
        "{gen_low} {semi_low}"
    );
}

#[test]
fn concave_dual_dominates_for_arbitrary_controls() {
    let tree = fixture("mirrored_funding_berm3");
    let sol = solve_dp_exact(&tree).unwrap();
    let triples = sol.triples();
    let paths = tree.paths();
    let Driver::Mirrored { inner } = &tree.driver else {
        unreachable!()
    };
    // any (r, ρ) in the domain of (−f)^# = g^# at (−r, −ρ): the two funding
    // branches and their convex combinations
    for w in [0.0, 0.3, 0.5, 1.0] {
        let mean = tree
            .expect(&paths, |_, p| {
                let input = path_input(&tree, &triples, p);
                let n = input.len();
                let s_lo = inner.subgradient(-1.0, &[0.0]).unwrap();
                let s_hi = inner.subgradient(1.0, &[0.0]).unwrap();
                let r = -(w * s_lo.r + (1.0 - w) * s_hi.r);
                let rho = -(w * s_lo.rho[0] + (1.0 - w) * s_hi.rho[0]);
                let ctrl = Controls {
                    r: vec![r; n],
                    rho: vec![vec![rho]; n],
                    conj: vec![0.0; n],
                };
                vartheta_up_with(&input, &ctrl, InnerMode::Plain)
            })
            .unwrap();
        assert!(mean >= sol.y0() - 1e-10, "w = {w}: {mean} < {}", sol.y0());
    }
}

#[test]
fn error_constants_at_zero_lipschitz() {
    let c = error_bound_constants(&[0.0; 4], &[0.25; 4], 0, 2).unwrap();
    assert_eq!((c.big_c, c.small_c), (2.0, 1.0));
    let c = error_bound_constants(&[0.5; 2], &[0.5; 2], 0, 2).unwrap();
    assert_relative_eq!(
        c.big_c,
        1.0 + (1.0 / 0.75f64).powi(2) * 1.5,
        epsilon = 1e-14
    );
    assert_relative_eq!(c.small_c, (1.0 / 0.75f64).powi(2), epsilon = 1e-14);
    assert!(c.big_c >= 1.0 && c.small_c >= 1.0);
}

#[test]
fn error_estimates_hold_on_flat_trees() {
    for name in ["funding_flat_berm4", "funding_flat_eu3"] {
        let tree = fixture(name);
        let sol = solve_dp_exact(&tree).unwrap();
        let zero = check_error_bounds(&tree, &sol, &Perturbation::zero(&tree)).unwrap();
        assert!(
            zero.up_gap.abs() < 1e-10 && zero.low_gap.abs() < 1e-10,
            "{zero:?}"
        );
        assert_eq!((zero.up_bound, zero.low_bound), (0.0, 0.0));
        for seed in 0..100 {
            let pert = Perturbation::random(&tree, seed, 2.0);
            let r = check_error_bounds(&tree, &sol, &pert).unwrap();
            assert!(r.holds(1e-10), "{name} seed {seed}: {r:?}");
            assert!(
                r.up_gap >= -1e-10 && r.low_gap >= -1e-10,
                "{name} {seed} {r:?}"
            );
        }
    }
}

#[test]
fn error_estimates_need_zero_weights_and_convexity() {
    for name in ["funding_binomial_eu2", "credit_binomial_eu4"] {
        let tree = fixture(name);
        let sol = solve_dp_exact(&tree).unwrap();
        assert!(check_error_bounds(&tree, &sol, &Perturbation::zero(&tree)).is_err());
    }
}

#[test]
fn invalid_trees_are_rejected() {
    let mut tree = fixture("funding_binomial_eu2");
    tree.nodes[0][0].children[0].p = 0.6;
    assert!(tree.validate().is_err());
    let mut tree = fixture("funding_binomial_eu2");
    tree.nodes[0][0].children[0].beta = vec![40.0];
    assert!(tree.validate().is_err());
    let mut tree = fixture("funding_binomial_eu2");
    tree.nodes[2][0].payoff = None;
    assert!(tree.validate().is_err());
    let text = fixture("funding_binomial_eu2").to_json().unwrap();
    let extra = text.replacen("\"deltas\"", "\"bogus\": 1, \"deltas\"", 1);
    assert!(ExactTree::from_json(&extra).is_err());
}
