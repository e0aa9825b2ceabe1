//! Reviewer-reviewer pairwise MRF and hard-EM clustering.
//!
//! Every reviewer is a binary variable (deceptive or authentic). The score of a
//! labeling `y` under parameters `(w, bias, lambda, mu)` is
//!
//! ```text
//! E(y) = sum_i theta_i [y_i = deceptive] + sum_(i,j) lambda (c_ij + mu s_ij) [y_i = y_j]
//! theta_i = w . f_i + bias
//! ```
//!
//! where `f_i` are the reviewer's behavior features, `c_ij` the number of root-task
//! products both reviewed and `s_ij` their behavior similarity. With `lambda, mu >= 0`
//! the pairwise terms only reward agreement, so the exact maximizer is a minimum
//! s-t cut. The M-step fits the parameters by maximizing the pseudo-log-likelihood
//! of the current labeling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::corpus::{Label, Review, ReviewerId, TaskSet};
use crate::error::{Error, Result};
use crate::mincut::FlowNetwork;

pub const BEHAVIOR_DIMS: usize = 4;
pub const BEHAVIOR_NAMES: [&str; BEHAVIOR_DIMS] = [
    "fraction_verified",
    "fraction_five_star",
    "max_reviews_per_day",
    "root_task_product_fraction",
];
/// Reviews-per-day values at or above this cap map to 1.0.
pub const REVIEWS_PER_DAY_CAP: f64 = 10.0;

/// Number of free parameters: behavior weights, bias, lambda, mu.
pub const PARAM_DIMS: usize = BEHAVIOR_DIMS + 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewerNode {
    pub id: ReviewerId,
    pub behavior: [f64; BEHAVIOR_DIMS],
    pub seed: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub collab: u32,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewerGraph {
    pub nodes: Vec<ReviewerNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfParams {
    pub weights: [f64; BEHAVIOR_DIMS],
    pub bias: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for MrfParams {
    fn default() -> Self {
        MrfParams {
            weights: [0.0; BEHAVIOR_DIMS],
            bias: 0.0,
            lambda: 1.0,
            mu: 1.0,
        }
    }
}

impl MrfParams {
    pub fn to_vec(&self) -> [f64; PARAM_DIMS] {
        let w = self.weights;
        [w[0], w[1], w[2], w[3], self.bias, self.lambda, self.mu]
    }

    pub fn from_vec(x: &[f64; PARAM_DIMS]) -> Self {
        MrfParams {
            weights: [x[0], x[1], x[2], x[3]],
            bias: x[4],
            lambda: x[5],
            mu: x[6],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("MRF parameters must be finite"));
        }
        if self.lambda < 0.0 {
            return Err(Error::NegativeCoupling(self.lambda));
        }
        if self.mu < 0.0 {
            return Err(Error::invalid(format!("similarity weight mu = {} must be >= 0", self.mu)));
        }
        Ok(())
    }
}

/// Total labeling of the graph's nodes, indexed like `ReviewerGraph::nodes`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment(pub Vec<Label>);

impl Assignment {
    pub fn all(n: usize, label: Label) -> Self {
        Assignment(vec![label; n])
    }

    pub fn label(&self, i: usize) -> Label {
        self.0[i]
    }

    pub fn deceptive_count(&self) -> usize {
        self.0.iter().filter(|l| l.is_deceptive()).count()
    }
}

/// Seed labels as `reviewer_id<TAB>label` lines; blank lines and `#` comments skipped.
pub fn parse_seeds(text: &str) -> Result<BTreeMap<ReviewerId, Label>> {
    let mut seeds = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let record = |message: String| Error::Record { line: i + 1, message };
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| record("expected reviewer_id<TAB>label".into()))?;
        let label: Label = label.trim().parse().map_err(|e: Error| record(e.to_string()))?;
        let id = ReviewerId(id.trim().to_string());
        if seeds.insert(id.clone(), label).is_some() {
            return Err(Error::DuplicateId(id.0));
        }
    }
    Ok(seeds)
}

pub fn load_seeds(path: &std::path::Path) -> Result<BTreeMap<ReviewerId, Label>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_seeds(&text)
}

fn l1_similarity(a: &[f64; BEHAVIOR_DIMS], b: &[f64; BEHAVIOR_DIMS]) -> f64 {
    let dist: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    1.0 - dist / BEHAVIOR_DIMS as f64
}

/// Builds one node per reviewer (sorted by id) and an edge for every pair that
/// reviewed at least one common root-task product.
pub fn build_graph(reviews: &[Review], tasks: &TaskSet, seeds: &BTreeMap<ReviewerId, Label>) -> ReviewerGraph {
    let mut by_reviewer: BTreeMap<&ReviewerId, Vec<&Review>> = BTreeMap::new();
    for r in reviews {
        by_reviewer.entry(&r.reviewer_id).or_default().push(r);
    }
    let index: BTreeMap<&ReviewerId, usize> = by_reviewer.keys().enumerate().map(|(i, id)| (*id, i)).collect();

    let nodes: Vec<ReviewerNode> = by_reviewer
        .iter()
        .map(|(id, rs)| {
            let n = rs.len() as f64;
            let verified = rs.iter().filter(|r| r.verified_purchase).count() as f64 / n;
            let five = rs.iter().filter(|r| r.rating == 5).count() as f64 / n;
            let mut per_day: BTreeMap<_, usize> = BTreeMap::new();
            for r in rs {
                *per_day.entry(r.posted_at).or_default() += 1;
            }
            let max_day = per_day.values().copied().max().unwrap_or(0) as f64;
            let root = rs.iter().filter(|r| tasks.contains(&r.product_id)).count() as f64 / n;
            ReviewerNode {
                id: (*id).clone(),
                behavior: [verified, five, max_day.min(REVIEWS_PER_DAY_CAP) / REVIEWS_PER_DAY_CAP, root],
                seed: seeds.get(*id).copied(),
            }
        })
        .collect();

    let mut reviewers_of: BTreeMap<_, BTreeSet<usize>> = BTreeMap::new();
    for r in reviews.iter().filter(|r| tasks.contains(&r.product_id)) {
        reviewers_of.entry(&r.product_id).or_default().insert(index[&r.reviewer_id]);
    }
    let mut collab: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for members in reviewers_of.values() {
        let members: Vec<usize> = members.iter().copied().collect();
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                *collab.entry((a, b)).or_default() += 1;
            }
        }
    }
    let edges = collab
        .into_iter()
        .map(|((a, b), c)| GraphEdge {
            a,
            b,
            collab: c,
            similarity: l1_similarity(&nodes[a].behavior, &nodes[b].behavior),
        })
        .collect();
    ReviewerGraph { nodes, edges }
}

impl ReviewerGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn unary(&self, params: &MrfParams) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| {
                n.behavior
                    .iter()
                    .zip(&params.weights)
                    .map(|(f, w)| f * w)
                    .sum::<f64>()
                    + params.bias
            })
            .collect()
    }

    pub fn edge_weight(&self, e: &GraphEdge, params: &MrfParams) -> f64 {
        params.lambda * (f64::from(e.collab) + params.mu * e.similarity)
    }

    /// Edge list as `i j c s` lines.
    pub fn render_edges(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {}", e.a, e.b, e.collab, e.similarity);
        }
        out
    }

    /// Node table: index, reviewer id, behavior features, seed label or `-`.
    pub fn render_nodes(&self) -> String {
        let mut out = format!("index\treviewer_id\t{}\tseed\n", BEHAVIOR_NAMES.join("\t"));
        for (i, n) in self.nodes.iter().enumerate() {
            let f: Vec<String> = n.behavior.iter().map(|v| v.to_string()).collect();
            let seed = n.seed.map(|l| l.as_str()).unwrap_or("-");
            let _ = writeln!(out, "{}\t{}\t{}\t{}", i, n.id, f.join("\t"), seed);
        }
        out
    }

    /// Two-column `reviewer_id<TAB>label` rendering of an assignment.
    pub fn render_assignment(&self, a: &Assignment) -> String {
        let mut out = String::new();
        for (n, l) in self.nodes.iter().zip(&a.0) {
            let _ = writeln!(out, "{}\t{}", n.id, l);
        }
        out
    }

    pub fn deceptive_reviewers(&self, a: &Assignment) -> BTreeSet<ReviewerId> {
        self.nodes
            .iter()
            .zip(&a.0)
            .filter(|(_, l)| l.is_deceptive())
            .map(|(n, _)| n.id.clone())
            .collect()
    }
}

/// Unnormalized log-score of an assignment; higher is better.
pub fn energy(graph: &ReviewerGraph, assignment: &Assignment, params: &MrfParams) -> f64 {
    let theta = graph.unary(params);
    let unary: f64 = theta
        .iter()
        .zip(&assignment.0)
        .filter(|(_, l)| l.is_deceptive())
        .map(|(t, _)| t)
        .sum();
    let pair: f64 = graph
        .edges
        .iter()
        .filter(|e| assignment.0[e.a] == assignment.0[e.b])
        .map(|e| graph.edge_weight(e, params))
        .sum();
    unary + pair
}

/// Exact maximizer of [`energy`] subject to seed labels, via minimum s-t cut.
/// Among tied maximizers the one with the fewest deceptive nodes is returned.
pub fn map_assignment(graph: &ReviewerGraph, params: &MrfParams) -> Result<Assignment> {
    params.validate()?;
    let n = graph.len();
    let (s, t) = (n, n + 1);
    let theta = graph.unary(params);
    let weights: Vec<f64> = graph.edges.iter().map(|e| graph.edge_weight(e, params)).collect();

    let total: f64 = theta.iter().map(|v| v.abs()).sum::<f64>() + weights.iter().sum::<f64>();
    let hard = 2.0 * total + 1.0;
    let scale = theta
        .iter()
        .map(|v| v.abs())
        .chain(weights.iter().copied())
        .fold(0.0, f64::max);

    // Source side = deceptive. Cutting s->i (i authentic) forfeits a positive
    // theta_i; cutting i->t (i deceptive) pays a negative one.
    let mut net = FlowNetwork::new(n + 2);
    net.set_tolerance(1e-12 * scale.max(1.0) * (n as f64 + 1.0));
    for (i, node) in graph.nodes.iter().enumerate() {
        match node.seed {
            Some(Label::Deceptive) => net.add_edge(s, i, hard, 0.0),
            Some(Label::Authentic) => net.add_edge(i, t, hard, 0.0),
            None => {}
        }
        if theta[i] > 0.0 {
            net.add_edge(s, i, theta[i], 0.0);
        } else if theta[i] < 0.0 {
            net.add_edge(i, t, -theta[i], 0.0);
        }
    }
    for (e, &w) in graph.edges.iter().zip(&weights) {
        if w > 0.0 {
            net.add_edge(e.a, e.b, w, w);
        }
    }
    net.max_flow(s, t);
    let side = net.source_side(s);
    Ok(Assignment(
        side[..n]
            .iter()
            .map(|&src| if src { Label::Deceptive } else { Label::Authentic })
            .collect(),
    ))
}

/// Exhaustive maximizer over all labelings that respect the seeds. Exponential;
/// intended as a reference for small graphs.
pub fn brute_force_map(graph: &ReviewerGraph, params: &MrfParams) -> Result<(Assignment, f64)> {
    let free: Vec<usize> = (0..graph.len()).filter(|&i| graph.nodes[i].seed.is_none()).collect();
    if free.len() > 20 {
        return Err(Error::invalid(format!(
            "brute force limited to 20 free nodes, got {}",
            free.len()
        )));
    }
    let mut labels: Vec<Label> = graph
        .nodes
        .iter()
        .map(|n| n.seed.unwrap_or(Label::Authentic))
        .collect();
    let mut best: Option<(Assignment, f64)> = None;
    for mask in 0u32..(1u32 << free.len()) {
        for (k, &i) in free.iter().enumerate() {
            labels[i] = if mask >> k & 1 == 1 {
                Label::Deceptive
            } else {
                Label::Authentic
            };
        }
        let a = Assignment(labels.clone());
        let e = energy(graph, &a, params);
        if best.as_ref().is_none_or(|(_, b)| e > *b) {
            best = Some((a, e));
        }
    }
    Ok(best.expect("at least one labeling"))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Pseudo-log-likelihood of `assignment` and its gradient with respect to
/// `[w_0..w_3, bias, lambda, mu]`.
///
/// Each node contributes `log P(y_i | y_neighbors)`, a logistic conditional in the
/// energy difference `delta_i = theta_i + sum_j lambda (c_ij + mu s_ij) (2 y_j - 1)`.
pub fn pseudo_log_likelihood(
    graph: &ReviewerGraph,
    assignment: &Assignment,
    params: &MrfParams,
) -> (f64, [f64; PARAM_DIMS]) {
    let n = graph.len();
    let sign = |i: usize| if assignment.0[i].is_deceptive() { 1.0 } else { -1.0 };
    // delta_i = theta_i + lambda * (collab_i + mu * sim_i)
    let mut collab = vec![0.0; n];
    let mut sim = vec![0.0; n];
    for e in &graph.edges {
        collab[e.a] += f64::from(e.collab) * sign(e.b);
        collab[e.b] += f64::from(e.collab) * sign(e.a);
        sim[e.a] += e.similarity * sign(e.b);
        sim[e.b] += e.similarity * sign(e.a);
    }
    let theta = graph.unary(params);
    let mut value = 0.0;
    let mut grad = [0.0; PARAM_DIMS];
    for i in 0..n {
        let delta = theta[i] + params.lambda * (collab[i] + params.mu * sim[i]);
        let y = if assignment.0[i].is_deceptive() { 1.0 } else { 0.0 };
        // log sigma(delta) if y = 1, log(1 - sigma(delta)) otherwise
        value -= softplus(if y == 1.0 { -delta } else { delta });
        let r = y - sigmoid(delta);
        for k in 0..BEHAVIOR_DIMS {
            grad[k] += r * graph.nodes[i].behavior[k];
        }
        grad[4] += r;
        grad[5] += r * (collab[i] + params.mu * sim[i]);
        grad[6] += r * params.lambda * sim[i];
    }
    (value, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStepConfig {
    /// Gaussian prior strength on all parameters; keeps the optimum finite when the
    /// labeling is separable.
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MStepConfig {
    fn default() -> Self {
        MStepConfig {
            ridge: 1e-2,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStepResult {
    pub params: MrfParams,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` was hit; `params` is then the best iterate seen.
    pub converged: bool,
}

fn m_objective(graph: &ReviewerGraph, a: &Assignment, x: &[f64; PARAM_DIMS], ridge: f64) -> (f64, [f64; PARAM_DIMS]) {
    let (mut v, mut g) = pseudo_log_likelihood(graph, a, &MrfParams::from_vec(x));
    for k in 0..PARAM_DIMS {
        v -= 0.5 * ridge * x[k] * x[k];
        g[k] -= ridge * x[k];
    }
    (v, g)
}

fn project(x: &mut [f64; PARAM_DIMS]) {
    x[5] = x[5].max(0.0);
    x[6] = x[6].max(0.0);
}

/// M-step: projected gradient ascent with backtracking on the penalized
/// pseudo-log-likelihood, starting from `init`. Lambda and mu stay >= 0.
pub fn update_params(
    graph: &ReviewerGraph,
    assignment: &Assignment,
    init: &MrfParams,
    config: &MStepConfig,
) -> MStepResult {
    let mut x = init.to_vec();
    project(&mut x);
    let (mut fx, mut gx) = m_objective(graph, assignment, &x, config.ridge);
    let mut step = 1.0;
    for it in 0..config.max_iter {
        let mut accepted = None;
        let mut eta = step;
        for _ in 0..60 {
            let mut cand = x;
            for k in 0..PARAM_DIMS {
                cand[k] += eta * gx[k];
            }
            project(&mut cand);
            let moved: f64 = (0..PARAM_DIMS).map(|k| gx[k] * (cand[k] - x[k])).sum();
            let (fc, gc) = m_objective(graph, assignment, &cand, config.ridge);
            if fc.is_finite() && fc >= fx + 1e-4 * moved {
                accepted = Some((cand, fc, gc));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            return MStepResult {
                params: MrfParams::from_vec(&x),
                objective: fx,
                iterations: it,
                converged: true,
            };
        };
        let change = (0..PARAM_DIMS).map(|k| (cand[k] - x[k]).powi(2)).sum::<f64>().sqrt();
        x = cand;
        fx = fc;
        gx = gc;
        step = (eta * 2.0).min(1e3);
        if change / eta.max(1e-300) <= config.tol || change <= config.tol * 1e-3 {
            return MStepResult {
                params: MrfParams::from_vec(&x),
                objective: fx,
                iterations: it + 1,
                converged: true,
            };
        }
    }
    log::warn!("M-step did not converge in {} iterations", config.max_iter);
    MStepResult {
        params: MrfParams::from_vec(&x),
        objective: fx,
        iterations: config.max_iter,
        converged: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub iteration: usize,
    /// Energy of the previous assignment under this step's parameters.
    pub previous_energy: Option<f64>,
    /// Energy of the new MAP assignment under the same parameters.
    pub energy: f64,
    pub deceptive: usize,
    pub changed: bool,
    pub m_step_converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub assignment: Assignment,
    pub params: MrfParams,
    pub trace: Vec<EmStep>,
    /// Completed E+M iterations.
    pub iterations: usize,
    pub converged: bool,
}

impl EmResult {
    pub fn render_trace_csv(&self) -> String {
        let mut out = String::from("iteration,previous_energy,energy,deceptive,changed,m_step_converged\n");
        for s in &self.trace {
            let prev = s.previous_energy.map(|v| v.to_string()).unwrap_or_default();
            let m = s.m_step_converged.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{}", s.iteration, prev, s.energy, s.deceptive, s.changed, m);
        }
        out
    }
}

/// Hard EM: alternate the exact MAP E-step with the pseudo-likelihood M-step until
/// the assignment stops changing or `max_iter` M-steps have run.
pub fn em_cluster(graph: &ReviewerGraph, init: &MrfParams, max_iter: usize, m_config: &MStepConfig) -> Result<EmResult> {
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let mut params = *init;
    let mut prev: Option<Assignment> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let a = map_assignment(graph, &params)?;
        let changed = prev.as_ref() != Some(&a);
        let mut step = EmStep {
            iteration: trace.len() + 1,
            previous_energy: prev.as_ref().map(|p| energy(graph, p, &params)),
            energy: energy(graph, &a, &params),
            deceptive: a.deceptive_count(),
            changed,
            m_step_converged: None,
        };
        if !changed {
            trace.push(step);
            converged = true;
            prev = Some(a);
            break;
        }
        if iterations == max_iter {
            trace.push(step);
            prev = Some(a);
            break;
        }
        let m = update_params(graph, &a, &params, m_config);
        step.m_step_converged = Some(m.converged);
        trace.push(step);
        params = m.params;
        iterations += 1;
        prev = Some(a);
    }
    Ok(EmResult {
        assignment: prev.expect("at least one E-step"),
        params,
        trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ProductId, Review};
    use chrono::NaiveDate;

    fn node(id: &str, seed: Option<Label>) -> ReviewerNode {
        ReviewerNode {
            id: id.into(),
            behavior: [0.0; 4],
            seed,
        }
    }

    fn params_with_bias(bias: f64) -> MrfParams {
        MrfParams {
            weights: [0.0; 4],
            bias,
            lambda: 1.0,
            mu: 0.0,
        }
    }

    #[test]
    fn energy_examples() {
        let g = ReviewerGraph {
            nodes: vec![node("a", None)],
            edges: vec![],
        };
        let p = params_with_bias(1.0);
        assert_eq!(energy(&g, &Assignment(vec![Label::Deceptive]), &p), 1.0);
        assert_eq!(energy(&g, &Assignment(vec![Label::Authentic]), &p), 0.0);

        // theta = (1, -0.5) through the first feature, edge weight lambda (c + mu s) = 2.
        let mut g = ReviewerGraph {
            nodes: vec![node("a", None), node("b", None)],
            edges: vec![GraphEdge { a: 0, b: 1, collab: 1, similarity: 0.5 }],
        };
        g.nodes[0].behavior = [1.0, 0.0, 0.0, 0.0];
        g.nodes[1].behavior = [-0.5, 0.0, 0.0, 0.0];
        let p = MrfParams { weights: [1.0, 0.0, 0.0, 0.0], bias: 0.0, lambda: 1.0, mu: 2.0 };
        let both = Assignment(vec![Label::Deceptive, Label::Deceptive]);
        assert_eq!(energy(&g, &both, &p), 2.5);
    }

    #[test]
    fn map_single_nodes() {
        let g = ReviewerGraph {
            nodes: vec![node("a", None)],
            edges: vec![],
        };
        assert_eq!(map_assignment(&g, &params_with_bias(1.0)).unwrap().0, [Label::Deceptive]);
        assert_eq!(map_assignment(&g, &params_with_bias(-1.0)).unwrap().0, [Label::Authentic]);
        // exact tie breaks toward authentic
        assert_eq!(map_assignment(&g, &params_with_bias(0.0)).unwrap().0, [Label::Authentic]);
    }

    #[test]
    fn seed_pulls_neighbor() {
        // theta_B = -0.1, edge strength 0.5: B joins its seeded neighbor.
        let mut g = ReviewerGraph {
            nodes: vec![node("a", Some(Label::Deceptive)), node("b", None)],
            edges: vec![GraphEdge { a: 0, b: 1, collab: 0, similarity: 0.5 }],
        };
        g.nodes[0].behavior = [0.0; 4];
        let p = MrfParams { weights: [0.0; 4], bias: -0.1, lambda: 1.0, mu: 1.0 };
        let a = map_assignment(&g, &p).unwrap();
        assert_eq!(a.0, [Label::Deceptive, Label::Deceptive]);
        let (b, e) = brute_force_map(&g, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(energy(&g, &a, &p), e);
    }

    #[test]
    fn negative_lambda_rejected() {
        let g = ReviewerGraph::default();
        let p = MrfParams { lambda: -0.5, ..MrfParams::default() };
        assert!(matches!(map_assignment(&g, &p), Err(Error::NegativeCoupling(_))));
    }

    fn review(id: &str, reviewer: &str, product: &str, verified: bool, day: u32) -> Review {
        Review {
            review_id: id.into(),
            reviewer_id: reviewer.into(),
            product_id: product.into(),
            category: "DVD".into(),
            rating: 5,
            title: String::new(),
            body: String::new(),
            sentences: vec![],
            verified_purchase: verified,
            posted_at: NaiveDate::from_ymd_opt(2015, 1, day).unwrap(),
        }
    }

    #[test]
    fn graph_construction() {
        let reviews = vec![
            review("1", "u", "p1", true, 1),
            review("2", "u", "p2", true, 1),
            review("3", "v", "p1", false, 2),
            review("4", "v", "p2", false, 3),
            review("5", "w", "p3", true, 4),
        ];
        let tasks: TaskSet = [ProductId::from("p1"), ProductId::from("p2")].into_iter().collect();
        let g = build_graph(&reviews, &tasks, &BTreeMap::new());
        assert_eq!(g.len(), 3);
        assert_eq!(g.nodes[0].behavior, [1.0, 1.0, 0.2, 1.0]);
        assert_eq!(g.nodes[1].behavior, [0.0, 1.0, 0.1, 1.0]);
        assert_eq!(g.nodes[2].behavior, [1.0, 1.0, 0.1, 0.0]);
        assert_eq!(g.edges.len(), 1);
        assert_eq!((g.edges[0].a, g.edges[0].b, g.edges[0].collab), (0, 1, 2));
        assert!((g.edges[0].similarity - (1.0 - 1.1 / 4.0)).abs() < 1e-12);
        assert!(g.render_edges().starts_with("0 1 2 "));
    }

    #[test]
    fn identical_behavior_gives_unit_similarity() {
        let reviews = vec![review("1", "u", "p1", true, 1), review("2", "v", "p1", true, 1)];
        let tasks: TaskSet = [ProductId::from("p1")].into_iter().collect();
        let g = build_graph(&reviews, &tasks, &BTreeMap::new());
        assert_eq!(g.edges[0].similarity, 1.0);
    }

    #[test]
    fn m_step_single_deceptive_node_gets_nonnegative_weights() {
        let mut g = ReviewerGraph {
            nodes: vec![node("a", None)],
            edges: vec![],
        };
        g.nodes[0].behavior = [0.4, 0.9, 0.3, 1.0];
        let a = Assignment(vec![Label::Deceptive]);
        // d PLL / d w_k = (1 - sigma(theta)) f_k > 0 for positive features.
        let (_, grad) = pseudo_log_likelihood(&g, &a, &MrfParams::default());
        assert!(grad[..4].iter().all(|&v| v > 0.0));
        let m = update_params(&g, &a, &MrfParams::default(), &MStepConfig::default());
        assert!(m.params.weights.iter().all(|&w| w >= 0.0));
        assert!(m.params.bias > 0.0);
    }

    #[test]
    fn lambda_clamps_at_zero_without_edge_signal() {
        let mut g = ReviewerGraph {
            nodes: vec![node("a", None), node("b", None)],
            edges: vec![GraphEdge { a: 0, b: 1, collab: 3, similarity: 0.2 }],
        };
        g.nodes[0].behavior = [1.0, 0.0, 0.0, 0.0];
        // the edge joins nodes with different labels, so agreement never helps
        let a = Assignment(vec![Label::Deceptive, Label::Authentic]);
        let m = update_params(&g, &a, &MrfParams::default(), &MStepConfig::default());
        assert_eq!(m.params.lambda, 0.0);
    }

    #[test]
    fn em_terminates_on_fixed_point() {
        // With no edges and no features the MAP labeling is all authentic, and the
        // M-step only drives the bias further negative.
        let g = ReviewerGraph {
            nodes: vec![node("a", None), node("b", None)],
            edges: vec![],
        };
        let r = em_cluster(&g, &MrfParams::default(), 50, &MStepConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.assignment, Assignment::all(2, Label::Authentic));
        assert!(r.params.bias < 0.0);
    }

    #[test]
    fn seed_file_parsing() {
        let seeds = parse_seeds("# seeds\nu1\tdeceptive\n\nu2\tauthentic\n").unwrap();
        assert_eq!(seeds.len(), 2);
        assert_eq!(seeds[&ReviewerId("u1".into())], Label::Deceptive);
        assert!(matches!(parse_seeds("u1 deceptive"), Err(Error::Record { line: 1, .. })));
        assert!(matches!(parse_seeds("u1\tspam"), Err(Error::Record { line: 1, .. })));
        assert!(matches!(parse_seeds("u1\tdeceptive\nu1\tauthentic"), Err(Error::DuplicateId(_))));
    }
}
