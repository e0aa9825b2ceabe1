//! Synthetic labeled corpora with planted stylistic contrasts between classes.
//!
//! Both classes share one vocabulary and one grammar. They differ only in the
//! rates and lengths set in [`SyntheticSpec`]: advertising-phrase rate,
//! mean sentence length and how often the review title repeats the product title.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    assign_broad_domain, rng_from_seed, Domain, LabeledCorpus, LabeledReview, Product, ProductId, Review,
    ReviewId, ReviewerId, SieveLabel,
};
use crate::error::{Error, Result};
use crate::features::AdPhraseList;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_deceptive: usize,
    pub n_authentic: usize,
    /// Probability that a review contains an advertising phrase, per class.
    pub ad_rate_deceptive: f64,
    pub ad_rate_authentic: f64,
    /// Mean words per sentence, per class.
    pub sentence_len_deceptive: f64,
    pub sentence_len_authentic: f64,
    /// Sentence lengths are drawn uniformly within `mean ± spread`.
    pub sentence_len_spread: f64,
    /// Probability that the review title repeats the product title, per class.
    pub title_overlap_deceptive: f64,
    pub title_overlap_authentic: f64,
    pub sentences_min: usize,
    pub sentences_max: usize,
    pub domains: Vec<Domain>,
    pub products_per_domain: usize,
    pub deceptive_reviewers: usize,
    pub authentic_reviewers: usize,
    pub phrases: Vec<String>,
}

pub const DEFAULT_AD_PHRASES: [&str; 12] = [
    "highly recommend",
    "must have",
    "best purchase ever",
    "five stars",
    "great value",
    "buy it now",
    "money well spent",
    "exceeded my expectations",
    "top quality",
    "love this product",
    "best on the market",
    "worth every penny",
];

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_deceptive: 500,
            n_authentic: 1500,
            ad_rate_deceptive: 0.6,
            ad_rate_authentic: 0.1,
            sentence_len_deceptive: 12.0,
            sentence_len_authentic: 20.0,
            sentence_len_spread: 4.0,
            title_overlap_deceptive: 0.7,
            title_overlap_authentic: 0.2,
            sentences_min: 3,
            sentences_max: 6,
            domains: Domain::ALL.to_vec(),
            products_per_domain: 20,
            deceptive_reviewers: 20,
            authentic_reviewers: 100,
            phrases: DEFAULT_AD_PHRASES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SyntheticSpec {
    /// Same corpus shape with both classes drawn from the deceptive settings.
    pub fn without_signal(&self) -> Self {
        SyntheticSpec {
            ad_rate_authentic: self.ad_rate_deceptive,
            sentence_len_authentic: self.sentence_len_deceptive,
            title_overlap_authentic: self.title_overlap_deceptive,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let probs = [
            self.ad_rate_deceptive,
            self.ad_rate_authentic,
            self.title_overlap_deceptive,
            self.title_overlap_authentic,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("synthetic rates must lie in [0, 1]"));
        }
        if self.sentences_min == 0 || self.sentences_min > self.sentences_max {
            return Err(Error::invalid("bad sentence count range"));
        }
        if self.domains.is_empty() || self.products_per_domain == 0 {
            return Err(Error::invalid("need at least one domain and product"));
        }
        if self.deceptive_reviewers == 0 || self.authentic_reviewers == 0 {
            return Err(Error::invalid("need at least one reviewer per class"));
        }
        if self.phrases.is_empty() {
            return Err(Error::invalid("need at least one advertising phrase"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: LabeledCorpus,
    pub products: BTreeMap<ProductId, Product>,
    pub phrases: AdPhraseList,
}

const NOUNS: [&str; 24] = [
    "box", "cable", "chapter", "author", "bottle", "screen", "plot", "actor", "battery", "cover", "page",
    "scene", "lid", "strap", "button", "story", "tablet", "charger", "dose", "label", "disc", "case",
    "manual", "sound",
];
const VERBS: [&str; 16] = [
    "held", "showed", "matched", "covered", "needed", "changed", "reached", "fixed", "moved", "kept",
    "used", "found", "opened", "joined", "turned", "left",
];
const ADJECTIVES: [&str; 16] = [
    "small", "blue", "old", "heavy", "thin", "second", "plain", "quiet", "long", "round", "soft", "dark",
    "short", "wide", "early", "light",
];
const PREPOSITIONS: [&str; 6] = ["of", "with", "in", "on", "near", "from"];
const BRANDS: [&str; 8] = ["Acme", "Norvo", "Teluma", "Brisk", "Qadra", "Velto", "Mirren", "Oskar"];
const GENERIC_TITLES: [&str; 8] = [
    "my notes",
    "a few thoughts",
    "after one month",
    "quick summary",
    "first impressions",
    "as described",
    "some details",
    "update",
];

fn category_for(domain: Domain) -> &'static str {
    match domain {
        Domain::Books => "Paperback",
        Domain::Health => "Health and Personal Care",
        Domain::Electronics => "Electronics",
        Domain::Movies => "DVD",
        Domain::Other => "Toys",
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

/// Noun phrase of exactly `k >= 2` words.
fn noun_phrase(rng: &mut ChaCha8Rng, k: usize) -> String {
    if k >= 5 {
        let head = rng.gen_range(2..=3.min(k - 3));
        let obj = k - head - 1;
        return format!(
            "(NP {} (PP (IN {}) {}))",
            noun_phrase(rng, head),
            pick(rng, &PREPOSITIONS),
            noun_phrase(rng, obj)
        );
    }
    let mut s = String::from("(NP (DT the)");
    for _ in 0..k - 2 {
        s.push_str(&format!(" (JJ {})", pick(rng, &ADJECTIVES)));
    }
    s.push_str(&format!(" (NN {}))", pick(rng, &NOUNS)));
    s
}

/// Clause `(S NP VP)` of exactly `n >= 5` words.
fn clause(rng: &mut ChaCha8Rng, n: usize) -> String {
    let subj = if n >= 6 { rng.gen_range(2..=3) } else { 2 };
    let rest = n - subj - 1;
    let verb = pick(rng, &VERBS);
    let vp = if rest >= 8 && rng.gen_bool(0.5) {
        format!(
            "(VP (VBD {}) {} (SBAR (IN because) {}))",
            verb,
            noun_phrase(rng, 2),
            clause(rng, rest - 3)
        )
    } else {
        format!("(VP (VBD {}) {})", verb, noun_phrase(rng, rest))
    };
    format!("(S {} {})", noun_phrase(rng, subj), vp)
}

fn sentence(rng: &mut ChaCha8Rng, n: usize) -> String {
    let n = n.max(5);
    let c = clause(rng, n);
    let inner = &c["(S ".len()..c.len() - 1];
    format!("(S {} (. .))", inner)
}

fn phrase_sentence(phrase: &str) -> String {
    let leaves: Vec<String> = phrase.split(' ').map(|w| format!("(NN {w})")).collect();
    format!("(FRAG (NP {}) (. !))", leaves.join(" "))
}

fn leaves_text(tree: &str) -> String {
    let mut words = Vec::new();
    for part in tree.split(')') {
        if let Some(idx) = part.rfind(' ') {
            let w = &part[idx + 1..];
            if !w.is_empty() && !w.starts_with('(') {
                words.push(w);
            }
        }
    }
    let mut text = String::new();
    for w in words {
        if !text.is_empty() && !matches!(w, "." | "!") {
            text.push(' ');
        }
        text.push_str(w);
    }
    text
}

/// Generates a labeled corpus according to `spec`. Identical inputs give
/// identical output.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let phrases = AdPhraseList::new(&spec.phrases)?;
    let mut rng = rng_from_seed(seed);

    let mut products = BTreeMap::new();
    let mut by_domain: Vec<Vec<ProductId>> = Vec::new();
    for &domain in &spec.domains {
        let mut ids = Vec::new();
        for k in 0..spec.products_per_domain {
            let id = ProductId(format!("p-{}-{:03}", domain.name().to_lowercase(), k));
            let title = format!(
                "{} {} {} {}{}",
                pick(&mut rng, &BRANDS),
                pick(&mut rng, &ADJECTIVES),
                pick(&mut rng, &NOUNS),
                (b'A' + rng.gen_range(0..26u8)) as char,
                rng.gen_range(10..100)
            );
            let description = leaves_text(&sentence(&mut rng, 10));
            products.insert(
                id.clone(),
                Product {
                    product_id: id.clone(),
                    title,
                    description,
                    category: category_for(domain).to_string(),
                },
            );
            ids.push(id);
        }
        by_domain.push(ids);
    }

    let mut labels: Vec<bool> = std::iter::repeat_n(true, spec.n_deceptive)
        .chain(std::iter::repeat_n(false, spec.n_authentic))
        .collect();
    labels.shuffle(&mut rng);

    let base = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let mut reviews = Vec::with_capacity(labels.len());
    // Domains are dealt round-robin within each class so every domain keeps
    // the corpus-wide class ratio.
    let mut dealt = [0usize; 2];
    for (i, deceptive) in labels.into_iter().enumerate() {
        let (ad_rate, mean_len, overlap, reviewer) = if deceptive {
            (
                spec.ad_rate_deceptive,
                spec.sentence_len_deceptive,
                spec.title_overlap_deceptive,
                format!("dec-{:03}", rng.gen_range(0..spec.deceptive_reviewers)),
            )
        } else {
            (
                spec.ad_rate_authentic,
                spec.sentence_len_authentic,
                spec.title_overlap_authentic,
                format!("auth-{:03}", rng.gen_range(0..spec.authentic_reviewers)),
            )
        };
        let d = dealt[usize::from(deceptive)] % spec.domains.len();
        dealt[usize::from(deceptive)] += 1;
        let domain = spec.domains[d];
        let product_id = by_domain[d][rng.gen_range(0..by_domain[d].len())].clone();
        let product = &products[&product_id];

        let n_sent = rng.gen_range(spec.sentences_min..=spec.sentences_max);
        let mut sentences: Vec<String> = (0..n_sent)
            .map(|_| {
                let jitter = rng.gen_range(-spec.sentence_len_spread..=spec.sentence_len_spread);
                sentence(&mut rng, (mean_len + jitter).round().max(5.0) as usize)
            })
            .collect();
        if rng.gen_bool(ad_rate) {
            let phrase = &phrases.phrases[rng.gen_range(0..phrases.len())];
            let at = rng.gen_range(0..=sentences.len());
            sentences.insert(at, phrase_sentence(phrase));
        }
        let title = if rng.gen_bool(overlap) {
            product.title.clone()
        } else {
            pick(&mut rng, &GENERIC_TITLES).to_string()
        };
        let body = sentences.iter().map(|s| leaves_text(s)).collect::<Vec<_>>().join(" ");
        let review = Review {
            review_id: ReviewId(format!("syn-{:05}", i)),
            reviewer_id: ReviewerId(reviewer),
            product_id,
            category: category_for(domain).to_string(),
            rating: rng.gen_range(1..=5),
            title,
            body,
            sentences,
            verified_purchase: rng.gen_bool(0.5),
            posted_at: base + chrono::Days::new(rng.gen_range(0..365)),
        };
        reviews.push(LabeledReview {
            domain: assign_broad_domain(&review.category),
            label: if deceptive {
                SieveLabel::Deceptive
            } else {
                SieveLabel::Authentic
            },
            review,
        });
    }
    Ok(SyntheticCorpus {
        corpus: LabeledCorpus { reviews },
        products,
        phrases,
    })
}
