//! Exact reference solutions on small finite trees.
//!
//! A tree replaces the Gaussian one-step transitions by a finite Markov chain
//! with explicit weights `β` per transition. Conditional expectations become
//! finite sums, so the dynamic program, its Doob martingales and the optimal
//! controls are available exactly and every recursion can be checked against
//! them path by path.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::generator::{Driver, Envelope, Shape, Side};
use crate::inputs::{Expectations, InnerMode, PathInput, StepInput};
use crate::lower::{
    controls_along_path, stopping_time, theta_low_convex, theta_low_h, vartheta_low_concave,
};
use crate::payoff::Barrier;
use crate::rng::{stream, StreamRole};
use crate::upper::{theta_up_convex, theta_up_h, vartheta_up_concave, DualSolver};

pub const MAX_STEPS: usize = 6;
pub const MAX_BRANCHING: usize = 4;
pub const MAX_DIM: usize = 2;
/// Margin on the step-size relations every tree must respect.
pub const MARGIN: f64 = 0.9;
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub to: usize,
    pub p: f64,
    #[serde(default)]
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNode {
    /// Optional state label; drivers here do not read it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x: Vec<f64>,
    /// `S` at this node, `null` off the exercise set.
    pub payoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Transition>,
}

/// `nodes[i]` lists the states at step `i`; `nodes[0]` is the single root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactTree {
    #[serde(default)]
    pub name: String,
    pub deltas: Vec<f64>,
    pub driver: Driver,
    pub nodes: Vec<Vec<TreeNode>>,
}

const BUILTIN: [(&str, &str); 8] = [
    (
        "credit_binomial_eu4",
        include_str!("../fixtures/credit_binomial_eu4.json"),
    ),
    (
        "credit_trinomial_berm3",
        include_str!("../fixtures/credit_trinomial_berm3.json"),
    ),
    (
        "funding_2d_berm4",
        include_str!("../fixtures/funding_2d_berm4.json"),
    ),
    (
        "funding_binomial_eu2",
        include_str!("../fixtures/funding_binomial_eu2.json"),
    ),
    (
        "funding_flat_berm4",
        include_str!("../fixtures/funding_flat_berm4.json"),
    ),
    (
        "funding_flat_eu3",
        include_str!("../fixtures/funding_flat_eu3.json"),
    ),
    (
        "funding_trinomial_berm3",
        include_str!("../fixtures/funding_trinomial_berm3.json"),
    ),
    (
        "mirrored_funding_berm3",
        include_str!("../fixtures/mirrored_funding_berm3.json"),
    ),
];

/// The fixture trees shipped with the crate, sorted by name.
pub fn builtin_trees() -> Result<Vec<ExactTree>> {
    BUILTIN
        .iter()
        .map(|(_, text)| ExactTree::from_json(text))
        .collect()
}

pub fn builtin_tree(name: &str) -> Result<ExactTree> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| invalid("tree", format!("no built-in tree named `{name}`")))?;
    ExactTree::from_json(text)
}

/// One root-to-leaf path: node index per step, chosen transition per step and
/// the path probability.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePath {
    pub nodes: Vec<usize>,
    pub moves: Vec<usize>,
    pub prob: f64,
}

impl ExactTree {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: ExactTree =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn steps(&self) -> usize {
        self.deltas.len()
    }

    pub fn barrier(&self, i: usize, k: usize) -> Barrier {
        match self.nodes[i][k].payoff {
            Some(v) => Barrier::Value(v),
            None => Barrier::MinusInfinity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.steps();
        let zd = self.driver.z_dim();
        if n == 0 || n > MAX_STEPS {
            return Err(invalid(
                "deltas",
                format!("tree needs 1..={MAX_STEPS} steps, got {n}"),
            ));
        }
        if zd > MAX_DIM {
            return Err(invalid(
                "driver",
                format!("z dimension {zd} exceeds {MAX_DIM}"),
            ));
        }
        if self.nodes.len() != n + 1 || self.nodes[0].len() != 1 {
            return Err(invalid("nodes", "need n + 1 levels and a single root"));
        }
        let alpha_y = self.driver.alpha_y();
        for (i, level) in self.nodes.iter().enumerate() {
            if level.is_empty() {
                return Err(invalid("nodes", format!("level {i} is empty")));
            }
            for (k, node) in level.iter().enumerate() {
                if let Some(v) = node.payoff {
                    if !v.is_finite() {
                        return Err(invalid(
                            "payoff",
                            format!("non-finite payoff at ({i}, {k})"),
                        ));
                    }
                }
                if i == n {
                    if node.payoff.is_none() {
                        return Err(invalid(
                            "payoff",
                            format!("terminal node {k} needs a payoff"),
                        ));
                    }
                    if !node.children.is_empty() {
                        return Err(invalid("children", "terminal nodes have no children"));
                    }
                    continue;
                }
                let delta = self.deltas[i];
                if !(delta > 0.0) || !(alpha_y * delta <= MARGIN) {
                    return Err(invalid(
                        "deltas",
                        format!("step {i} violates alpha_y * delta <= {MARGIN}"),
                    ));
                }
                if node.children.is_empty() || node.children.len() > MAX_BRANCHING {
                    return Err(invalid(
                        "children",
                        format!("node ({i}, {k}) needs 1..={MAX_BRANCHING} children"),
                    ));
                }
                let mut total = 0.0;
                for c in &node.children {
                    if c.to >= self.nodes[i + 1].len() {
                        return Err(invalid(
                            "children",
                            format!("node ({i}, {k}) points past level {}", i + 1),
                        ));
                    }
                    if !(c.p >= 0.0) {
                        return Err(invalid("children", "negative probability"));
                    }
                    if c.beta.len() != zd {
                        return Err(invalid(
                            "beta",
                            format!("node ({i}, {k}) needs {zd} weights per transition"),
                        ));
                    }
                    let load: f64 = c
                        .beta
                        .iter()
                        .enumerate()
                        .map(|(d, b)| self.driver.alpha_z(d) * b.abs())
                        .sum();
                    if load * delta > MARGIN {
                        return Err(invalid(
                            "beta",
                            format!("node ({i}, {k}) violates the weight margin"),
                        ));
                    }
                    total += c.p;
                }
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(invalid(
                        "children",
                        format!("probabilities at ({i}, {k}) sum to {total}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Every path with positive probability, in lexicographic order.
    pub fn paths(&self) -> Vec<TreePath> {
        let mut out = Vec::new();
        let mut nodes = vec![0];
        let mut moves = Vec::new();
        self.walk(0, 1.0, &mut nodes, &mut moves, &mut out);
        out
    }

    fn walk(
        &self,
        i: usize,
        prob: f64,
        nodes: &mut Vec<usize>,
        moves: &mut Vec<usize>,
        out: &mut Vec<TreePath>,
    ) {
        if i == self.steps() {
            out.push(TreePath {
                nodes: nodes.clone(),
                moves: moves.clone(),
                prob,
            });
            return;
        }
        let k = nodes[i];
        for (m, c) in self.nodes[i][k].children.iter().enumerate() {
            if c.p == 0.0 {
                continue;
            }
            nodes.push(c.to);
            moves.push(m);
            self.walk(i + 1, prob * c.p, nodes, moves, out);
            nodes.pop();
            moves.pop();
        }
    }

    /// A path drawn from the tree's transition law.
    pub fn sample_path<R: Rng>(&self, rng: &mut R) -> TreePath {
        let mut nodes = vec![0];
        let mut moves = Vec::with_capacity(self.steps());
        let mut prob = 1.0;
        for i in 0..self.steps() {
            let m = self.draw_child(i, nodes[i], rng);
            let c = &self.nodes[i][nodes[i]].children[m];
            prob *= c.p;
            nodes.push(c.to);
            moves.push(m);
        }
        TreePath { nodes, moves, prob }
    }

    fn draw_child<R: Rng>(&self, i: usize, k: usize, rng: &mut R) -> usize {
        let children = &self.nodes[i][k].children;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (m, c) in children.iter().enumerate() {
            acc += c.p;
            if u < acc {
                return m;
            }
        }
        children.iter().rposition(|c| c.p > 0.0).unwrap_or(0)
    }

    /// `E[v(child)]` and `E[β v(child)]` at node `(i, k)`.
    pub fn expectations(&self, i: usize, k: usize, next: &[f64]) -> Expectations {
        let zd = self.driver.z_dim();
        let mut e = Expectations {
            y: 0.0,
            by: vec![0.0; zd],
        };
        for c in &self.nodes[i][k].children {
            let v = next[c.to];
            e.y += c.p * v;
            for d in 0..zd {
                e.by[d] += c.p * c.beta[d] * v;
            }
        }
        e
    }

    /// Exact tree expectation of a per-path quantity.
    pub fn expect(
        &self,
        paths: &[TreePath],
        mut value: impl FnMut(usize, &TreePath) -> Result<f64>,
    ) -> Result<f64> {
        let mut acc = 0.0;
        for (l, p) in paths.iter().enumerate() {
            acc += p.prob * value(l, p)?;
        }
        Ok(acc)
    }
}

/// A triple `(ỹ, q̃, z̃)` per node; `z` is empty on the last level.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTriples {
    pub y: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub z: Vec<Vec<Vec<f64>>>,
}

impl NodeTriples {
    /// The same triples plus independent uniform noise of size `scale` on
    /// `ỹ` (before the last step), `q̃` and `z̃`.
    pub fn perturbed(&self, seed: u64, scale: f64) -> Self {
        let mut rng = stream(seed, StreamRole::Audit, 0x7472, 0);
        let mut noise = move || scale * (2.0 * rng.random::<f64>() - 1.0);
        let n = self.y.len() - 1;
        let mut out = self.clone();
        for i in 0..n {
            for k in 0..out.y[i].len() {
                out.y[i][k] += noise();
                out.q[i][k] += noise();
                for v in &mut out.z[i][k] {
                    *v += noise();
                }
            }
        }
        out
    }
}

/// Exact solution of the dynamic program on a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub y: Vec<Vec<f64>>,
    /// `E_i[Y_{i+1}]` per node.
    pub q: Vec<Vec<f64>>,
    /// `E_i[β_{i+1} Y_{i+1}]` per node.
    pub z: Vec<Vec<Vec<f64>>>,
    /// `S_i ≥ E_i[Y_{i+1}] + f(Y_i, Z_i) Δ_i`; its first occurrence is `τ*`.
    pub stop: Vec<Vec<bool>>,
}

impl ExactSolution {
    pub fn y0(&self) -> f64 {
        self.y[0][0]
    }

    pub fn triples(&self) -> NodeTriples {
        NodeTriples {
            y: self.y.clone(),
            q: self.q.clone(),
            z: self.z.clone(),
        }
    }

    /// `τ*` along a path.
    pub fn tau_star(&self, path: &TreePath) -> usize {
        let n = path.nodes.len() - 1;
        (0..n).find(|&i| self.stop[i][path.nodes[i]]).unwrap_or(n)
    }
}

/// `Y_n = S_n`, `Y_i = max{S_i, y}` with `y = E_i[Y_{i+1}] + f(y, E_i[βY_{i+1}]) Δ_i`.
pub fn solve_dp_exact(tree: &ExactTree) -> Result<ExactSolution> {
    tree.validate()?;
    let n = tree.steps();
    let driver = &tree.driver;
    let mut y: Vec<Vec<f64>> = tree.nodes.iter().map(|l| vec![0.0; l.len()]).collect();
    let mut q = y.clone();
    let mut z: Vec<Vec<Vec<f64>>> = tree
        .nodes
        .iter()
        .map(|l| vec![Vec::new(); l.len()])
        .collect();
    let mut stop: Vec<Vec<bool>> = tree.nodes.iter().map(|l| vec![false; l.len()]).collect();
    for (k, node) in tree.nodes[n].iter().enumerate() {
        y[n][k] = node.payoff.expect("validated terminal payoff");
        q[n][k] = f64::NAN;
    }
    for i in (0..n).rev() {
        let (head, tail) = y.split_at_mut(i + 1);
        let next = &tail[0];
        for k in 0..tree.nodes[i].len() {
            let e = tree.expectations(i, k, next);
            let cont = driver.fixed_point(i, e.y, &e.by, tree.deltas[i])?;
            let barrier = tree.barrier(i, k);
            let value = barrier.reflect(cont);
            stop[i][k] = barrier.at_least(e.y + driver.eval(value, &e.by) * tree.deltas[i]);
            head[i][k] = value;
            q[i][k] = e.y;
            z[i][k] = e.by;
        }
    }
    Ok(ExactSolution { y, q, z, stop })
}

/// Recursion inputs along `path` for the given node triples, with the
/// expectations of `ỹ_{i+1}` computed exactly. Both inner modes carry the
/// same exact values.
pub fn path_input(tree: &ExactTree, triples: &NodeTriples, path: &TreePath) -> PathInput {
    let n = tree.steps();
    let steps = (0..n)
        .map(|i| {
            let k = path.nodes[i];
            let c = &tree.nodes[i][k].children[path.moves[i]];
            let e = tree.expectations(i, k, &triples.y[i + 1]);
            StepInput {
                delta: tree.deltas[i],
                barrier: tree.barrier(i, k),
                y: triples.y[i][k],
                q: triples.q[i][k],
                z: triples.z[i][k].clone(),
                beta: c.beta.clone(),
                y_next: triples.y[i + 1][c.to],
                plain: e.clone(),
                cv: e,
            }
        })
        .collect();
    PathInput {
        steps,
        terminal: triples.y[n][path.nodes[n]],
    }
}

/// As [`path_input`] but with the expectations replaced by plain averages
/// over `inner` child draws per step from the inner streams of `index`.
pub fn sampled_path_input(
    tree: &ExactTree,
    triples: &NodeTriples,
    path: &TreePath,
    seed: u64,
    index: u64,
    inner: usize,
) -> Result<PathInput> {
    if inner == 0 {
        return Err(Error::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    let zd = tree.driver.z_dim();
    let mut input = path_input(tree, triples, path);
    for (i, s) in input.steps.iter_mut().enumerate() {
        let k = path.nodes[i];
        let mut rng = stream(seed, StreamRole::Inner, index, i as u64);
        let mut e = Expectations {
            y: 0.0,
            by: vec![0.0; zd],
        };
        for _ in 0..inner {
            let c = &tree.nodes[i][k].children[tree.draw_child(i, k, &mut rng)];
            let v = triples.y[i + 1][c.to];
            e.y += v;
            for d in 0..zd {
                e.by[d] += c.beta[d] * v;
            }
        }
        e.y /= inner as f64;
        e.by.iter_mut().for_each(|v| *v /= inner as f64);
        s.plain = e.clone();
        s.cv = e;
    }
    Ok(input)
}

/// Monte Carlo inputs for `outer` sampled paths of the tree.
pub fn tree_monte_carlo(
    tree: &ExactTree,
    triples: &NodeTriples,
    seed: u64,
    outer: usize,
    inner: usize,
) -> Result<Vec<PathInput>> {
    (0..outer as u64)
        .map(|l| {
            let path = tree.sample_path(&mut stream(seed, StreamRole::Outer, l, 0));
            sampled_path_input(tree, triples, &path, seed, l, inner)
        })
        .collect()
}

/// Largest violation of one identity and the path where it occurs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_error: f64,
    pub worst_path: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub y0: f64,
    pub paths: usize,
    pub checks: Vec<IdentityCheck>,
}

impl OptimalityReport {
    pub fn worst(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.max_error))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.max_error <= tol)
    }
}

struct Tracker {
    name: String,
    max_error: f64,
    worst_path: Option<Vec<usize>>,
}

impl Tracker {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            max_error: 0.0,
            worst_path: None,
        }
    }

    fn record(&mut self, err: f64, path: &TreePath) {
        if !(err <= self.max_error) {
            self.max_error = err;
            self.worst_path = Some(path.nodes.clone());
        }
    }

    fn finish(self) -> IdentityCheck {
        IdentityCheck {
            name: self.name,
            max_error: self.max_error,
            worst_path: self.worst_path,
        }
    }
}

/// The envelopes that apply to `driver`, by name.
pub fn envelopes_for(driver: &Driver) -> Vec<(&'static str, Envelope, Envelope)> {
    let mut out = vec![(
        "generic",
        Envelope::Generic(Side::Up),
        Envelope::Generic(Side::Low),
    )];
    if let Driver::Funding { params, .. } = driver {
        out.push((
            "semigeneric",
            Envelope::Semigeneric(Side::Up, *params),
            Envelope::Semigeneric(Side::Low, *params),
        ));
    }
    out
}

/// Runs every recursion with exact inputs and exact Doob martingales and
/// records the deviation from `Y`: pathwise for the dual and envelope
/// recursions, in tree expectation for the linearised lower bound.
pub fn verify_pathwise_optimality(
    tree: &ExactTree,
    sol: &ExactSolution,
) -> Result<OptimalityReport> {
    let driver = &tree.driver;
    let shape = driver.shape();
    let triples = sol.triples();
    let paths = tree.paths();
    let mode = InnerMode::Plain;
    let conjugate = driver.candidate_r_set().is_ok();
    let envs = envelopes_for(driver);

    let mut up = Tracker::new("theta_up");
    let mut up_conj = Tracker::new("theta_up_conjugate");
    let mut h_up: Vec<Tracker> = envs
        .iter()
        .map(|(n, ..)| Tracker::new(format!("theta_h_up_{n}")))
        .collect();
    let mut h_low: Vec<Tracker> = envs
        .iter()
        .map(|(n, ..)| Tracker::new(format!("theta_h_low_{n}")))
        .collect();
    let mut vlow = Tracker::new("vartheta_low");
    let mut vup = Tracker::new("vartheta_up");
    let mut low_mean = 0.0;

    for path in &paths {
        let input = path_input(tree, &triples, path);
        let tau = sol.tau_star(path);
        let y_at = |i: usize| sol.y[i][path.nodes[i]];
        let traj = theta_up_convex(driver, &input, mode, DualSolver::Picard)?;
        let err = (0..=input.len())
            .map(|i| (traj[i] - y_at(i)).abs())
            .fold(0.0, f64::max);
        up.record(err, path);
        if conjugate {
            let traj = theta_up_convex(driver, &input, mode, DualSolver::Conjugate)?;
            up_conj.record((traj[0] - sol.y0()).abs(), path);
        }
        for (e, (_, hu, hl)) in envs.iter().enumerate() {
            let t = theta_up_h(driver, hu, &input, mode)?;
            h_up[e].record((t[0] - sol.y0()).abs(), path);
            let t = theta_low_h(driver, hl, &input, mode, tau)?;
            h_low[e].record((t[0] - sol.y0()).abs(), path);
        }
        let t = vartheta_low_concave(driver, &input, mode, tau)?;
        vlow.record((t[0] - sol.y0()).abs(), path);
        if shape.is_concave() {
            let v = vartheta_up_concave(driver, &input, mode)?;
            vup.record((v - sol.y0()).abs(), path);
        }
        if shape != Shape::Concave {
            let ctrl = controls_along_path(driver, &input, false)?;
            low_mean += path.prob * theta_low_convex(&input, tau, &ctrl, None)?;
        }
    }

    let mut checks = vec![up.finish()];
    if conjugate {
        checks.push(up_conj.finish());
    }
    checks.extend(h_up.into_iter().map(Tracker::finish));
    checks.extend(h_low.into_iter().map(Tracker::finish));
    checks.push(vlow.finish());
    if shape.is_concave() {
        checks.push(vup.finish());
    }
    if shape != Shape::Concave {
        checks.push(IdentityCheck {
            name: "theta_low_expectation".into(),
            max_error: (low_mean - sol.y0()).abs(),
            worst_path: None,
        });
    }
    Ok(OptimalityReport {
        y0: sol.y0(),
        paths: paths.len(),
        checks,
    })
}

/// The constants `C(α, i)` and `c(i, α, τ)` of the a-priori error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticConstants {
    pub big_c: f64,
    pub small_c: f64,
}

/// `C = 1 + Π_{l=i}^{n−1}(1 − α_l Δ_l)^{-1} (1 + Σ_{j=i}^{n−1} α_j Δ_j)` and
/// `c = Π_{l=i}^{τ∧(n−1)}(1 − α_l Δ_l)^{-1}` for the profile `alpha`.
pub fn error_bound_constants(
    alpha: &[f64],
    deltas: &[f64],
    i: usize,
    tau: usize,
) -> Result<DiagnosticConstants> {
    let n = deltas.len();
    if alpha.len() != n || i > n {
        return Err(invalid("alpha", "one Lipschitz constant per step"));
    }
    let mut prod = 1.0;
    let mut sum = 0.0;
    for l in i..n {
        let ad = alpha[l] * deltas[l];
        if !(ad < 1.0) {
            return Err(invalid(
                "alpha",
                format!("alpha * delta = {ad} at step {l}"),
            ));
        }
        prod /= 1.0 - ad;
        sum += ad;
    }
    let last = tau.min(n.saturating_sub(1));
    let small_c = (i..=last).fold(1.0, |c, l| c / (1.0 - alpha[l] * deltas[l]));
    Ok(DiagnosticConstants {
        big_c: 1.0 + prod * (1.0 + sum),
        small_c,
    })
}

/// Perturbations for the error-estimate audit: zero-mean martingale
/// increments per transition and offsets of `ỹ` and `q̃` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub m0: Vec<Vec<Vec<f64>>>,
    pub y: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl Perturbation {
    pub fn zero(tree: &ExactTree) -> Self {
        let n = tree.steps();
        Self {
            m0: (0..n)
                .map(|i| {
                    tree.nodes[i]
                        .iter()
                        .map(|nd| vec![0.0; nd.children.len()])
                        .collect()
                })
                .collect(),
            y: tree.nodes.iter().map(|l| vec![0.0; l.len()]).collect(),
            q: tree.nodes.iter().map(|l| vec![0.0; l.len()]).collect(),
        }
    }

    /// Uniform draws of size `scale`, centred per node so that the
    /// martingale part keeps zero conditional mean.
    pub fn random(tree: &ExactTree, seed: u64, scale: f64) -> Self {
        let mut rng = stream(seed, StreamRole::Audit, 0x7065, 0);
        let mut u = move || scale * (2.0 * rng.random::<f64>() - 1.0);
        let mut p = Self::zero(tree);
        let n = tree.steps();
        for i in 0..n {
            for (k, node) in tree.nodes[i].iter().enumerate() {
                let raw: Vec<f64> = node.children.iter().map(|_| u()).collect();
                let mean: f64 = node.children.iter().zip(&raw).map(|(c, v)| c.p * v).sum();
                p.m0[i][k] = raw.iter().map(|v| v - mean).collect();
                p.y[i][k] = u();
                p.q[i][k] = u();
            }
        }
        p
    }
}

/// Both sides of the two error estimates as exact tree expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBoundReport {
    /// `E[θ^up_0(M^0)] − Y_0`.
    pub up_gap: f64,
    /// `E[C max_j |M^0_j − M^{0,*}_j|]`.
    pub up_bound: f64,
    /// `Y_0 − E[θ^low(τ̃, r̃)]`.
    pub low_gap: f64,
    pub low_bound: f64,
}

impl ErrorBoundReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.up_gap <= self.up_bound + tol && self.low_gap <= self.low_bound + tol
    }
}

/// Evaluates both error estimates for one perturbation. Only convex drivers
/// on trees with `β ≡ 0` are covered.
pub fn check_error_bounds(
    tree: &ExactTree,
    sol: &ExactSolution,
    pert: &Perturbation,
) -> Result<ErrorBoundReport> {
    let n = tree.steps();
    let flat = tree.nodes[..n]
        .iter()
        .flatten()
        .flat_map(|nd| &nd.children)
        .all(|c| c.beta.iter().all(|b| *b == 0.0));
    if !flat {
        return Err(Error::Unsupported("error estimates with non-zero weights"));
    }
    let driver = &tree.driver;
    if !driver.shape().is_convex() {
        return Err(Error::ShapeMismatch {
            required: "convex",
            actual: "non-convex",
        });
    }
    let alpha = vec![driver.alpha_y(); n];
    let big_c = error_bound_constants(&alpha, &tree.deltas, 0, n)?.big_c;
    let exact = sol.triples();
    let mut approx = exact.clone();
    for i in 0..n {
        for k in 0..tree.nodes[i].len() {
            approx.y[i][k] += pert.y[i][k];
            approx.q[i][k] += pert.q[i][k];
        }
    }
    let paths = tree.paths();
    let mut report = ErrorBoundReport {
        up_gap: -sol.y0(),
        up_bound: 0.0,
        low_gap: sol.y0(),
        low_bound: 0.0,
    };
    for path in &paths {
        let mut input = path_input(tree, &exact, path);
        let mut drift = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let eps = pert.m0[i][path.nodes[i]][path.moves[i]];
            input.steps[i].plain.y -= eps;
            drift += eps;
            worst = worst.max(drift.abs());
        }
        let up = theta_up_convex(driver, &input, InnerMode::Plain, DualSolver::Picard)?[0];
        report.up_gap += path.prob * up;
        report.up_bound += path.prob * big_c * worst;

        let input = path_input(tree, &approx, path);
        let tau = stopping_time(driver, &input);
        let ctrl = controls_along_path(driver, &input, false)?;
        report.low_gap -= path.prob * theta_low_convex(&input, tau, &ctrl, None)?;
        let small_c = error_bound_constants(&alpha, &tree.deltas, 0, tau)?.small_c;
        let mut rhs = 0.0;
        for j in 0..=tau.min(n - 1) {
            let k = path.nodes[j];
            rhs += 3.0 * (approx.y[j][k] - exact.y[j][k]).abs() * alpha[j] * tree.deltas[j];
        }
        for j in 0..tau {
            let k = path.nodes[j];
            if sol.stop[j][k] {
                rhs += (approx.q[j][k] - exact.q[j][k]).max(0.0);
            }
        }
        if tau < n {
            let k = path.nodes[tau];
            if !sol.stop[tau][k] {
                rhs += (exact.q[tau][k] - approx.q[tau][k]).max(0.0);
            }
        }
        report.low_bound += path.prob * small_c * rhs;
    }
    Ok(report)
}
