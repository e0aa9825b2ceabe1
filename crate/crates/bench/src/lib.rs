//! Shared inputs for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revspam::features::{documents, Document, Resources};
use revspam::graph::{GraphEdge, ReviewerGraph, ReviewerNode};
use revspam::{generate_synthetic_corpus, Label, ReviewerId, SieveLabel, SyntheticSpec};

/// Parsed documents with their labels, the raw bracketed sentences and the resources they need.
pub struct BenchData {
    pub docs: Vec<Document>,
    pub labels: Vec<Label>,
    pub sentences: Vec<String>,
    pub resources: Resources,
}

/// A synthetic corpus of `n` reviews, 1:3 deceptive to authentic.
pub fn synthetic_documents(n: usize, seed: u64) -> BenchData {
    let spec = SyntheticSpec {
        n_deceptive: n / 4,
        n_authentic: n - n / 4,
        ..SyntheticSpec::default()
    };
    let syn = generate_synthetic_corpus(&spec, seed).expect("valid spec");
    let kept: Vec<_> = syn
        .corpus
        .reviews
        .iter()
        .filter(|r| r.label != SieveLabel::Excluded)
        .collect();
    let sentences = kept.iter().flat_map(|r| r.review.sentences.clone()).collect();
    let reviews: Vec<_> = kept.iter().map(|r| &r.review).collect();
    let docs = documents(&reviews, &syn.products).expect("synthetic trees parse");
    let labels = kept
        .iter()
        .map(|r| if r.label == SieveLabel::Deceptive { Label::Deceptive } else { Label::Authentic })
        .collect();
    BenchData {
        docs,
        labels,
        sentences,
        resources: Resources {
            lexicon: None,
            phrases: Some(syn.phrases),
        },
    }
}

/// Random reviewer graph with `n` free nodes and edge probability `density`.
pub fn random_graph(n: usize, density: f64, seed: u64) -> ReviewerGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|i| ReviewerNode {
            id: ReviewerId(format!("r{i:05}")),
            behavior: [rng.gen(), rng.gen(), rng.gen(), rng.gen()],
            seed: None,
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
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
