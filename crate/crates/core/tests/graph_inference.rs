use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revspam::graph::{
    brute_force_map, em_cluster, energy, map_assignment, pseudo_log_likelihood, update_params, Assignment,
    GraphEdge, MStepConfig, MrfParams, ReviewerGraph, ReviewerNode, PARAM_DIMS,
};
use revspam::Label;

fn random_graph(rng: &mut ChaCha8Rng, free: usize, seeded: usize) -> ReviewerGraph {
    let n = free + seeded;
    let nodes = (0..n)
        .map(|i| ReviewerNode {
            id: format!("r{i}").into(),
            behavior: [rng.gen(), rng.gen(), rng.gen(), rng.gen()],
            seed: (i >= free).then(|| if rng.gen_bool(0.5) { Label::Deceptive } else { Label::Authentic }),
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.3) {
                edges.push(GraphEdge {
                    a,
                    b,
                    collab: rng.gen_range(1..4),
                    similarity: rng.gen(),
                });
            }
        }
    }
    ReviewerGraph { nodes, edges }
}

fn random_params(rng: &mut ChaCha8Rng) -> MrfParams {
    MrfParams {
        weights: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        bias: rng.gen_range(-2.0..2.0),
        lambda: rng.gen_range(0.0..1.0),
        mu: rng.gen_range(0.0..2.0),
    }
}

#[test]
fn min_cut_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let free = rng.gen_range(1..=12);
        let seeded = rng.gen_range(0..=3);
        let g = random_graph(&mut rng, free, seeded);
        let p = random_params(&mut rng);
        let cut = map_assignment(&g, &p).unwrap();
        let (_, best) = brute_force_map(&g, &p).unwrap();
        assert_eq!(energy(&g, &cut, &p), best);
        for (i, node) in g.nodes.iter().enumerate() {
            if let Some(l) = node.seed {
                assert_eq!(cut.label(i), l);
            }
        }
    }
}

#[test]
fn zero_coupling_reduces_to_signs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_graph(&mut rng, 10, 0);
    let p = MrfParams {
        lambda: 0.0,
        ..random_params(&mut rng)
    };
    let a = map_assignment(&g, &p).unwrap();
    for (i, theta) in g.unary(&p).into_iter().enumerate() {
        assert_eq!(a.label(i).is_deceptive(), theta > 0.0);
    }
}

fn fd_gradient(g: &ReviewerGraph, a: &Assignment, p: &MrfParams) -> [f64; PARAM_DIMS] {
    let h = 1e-5;
    let x = p.to_vec();
    let mut out = [0.0; PARAM_DIMS];
    for k in 0..PARAM_DIMS {
        let mut hi = x;
        let mut lo = x;
        hi[k] += h;
        lo[k] -= h;
        let f = |v: &[f64; PARAM_DIMS]| pseudo_log_likelihood(g, a, &MrfParams::from_vec(v)).0;
        out[k] = (f(&hi) - f(&lo)) / (2.0 * h);
    }
    out
}

#[test]
fn pseudo_likelihood_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let g = random_graph(&mut rng, 5, 0);
        let a = Assignment((0..5).map(|_| if rng.gen_bool(0.5) { Label::Deceptive } else { Label::Authentic }).collect());
        let p = random_params(&mut rng);
        let (_, analytic) = pseudo_log_likelihood(&g, &a, &p);
        let numeric = fd_gradient(&g, &a, &p);
        let diff: f64 = analytic.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        assert!(diff / scale <= 1e-5, "relative error {}", diff / scale);
    }
}

#[test]
fn m_step_increases_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(&mut rng, 12, 0);
    let a = map_assignment(&g, &random_params(&mut rng)).unwrap();
    let init = MrfParams::default();
    let cfg = MStepConfig::default();
    let m = update_params(&g, &a, &init, &cfg);
    let before = pseudo_log_likelihood(&g, &a, &init).0
        - 0.5 * cfg.ridge * init.to_vec().iter().map(|v| v * v).sum::<f64>();
    assert!(m.objective >= before);
    assert!(m.params.lambda >= 0.0 && m.params.mu >= 0.0);
}

#[test]
fn em_final_assignment_is_optimal_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = random_graph(&mut rng, 15, 2);
    let r1 = em_cluster(&g, &MrfParams::default(), 50, &MStepConfig::default()).unwrap();
    let r2 = em_cluster(&g, &MrfParams::default(), 50, &MStepConfig::default()).unwrap();
    assert_eq!(r1, r2);
    let (_, best) = brute_force_map(&g, &r1.params).unwrap();
    assert_eq!(energy(&g, &r1.assignment, &r1.params), best);
    for step in &r1.trace {
        if let Some(prev) = step.previous_energy {
            assert!(step.energy >= prev);
        }
    }
}

#[test]
fn em_stops_at_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_graph(&mut rng, 0, 6);
    let r = em_cluster(&g, &MrfParams::default(), 50, &MStepConfig::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 1);
    assert_eq!(r.trace.len(), 2);
    assert!(!r.trace[1].changed);
}
