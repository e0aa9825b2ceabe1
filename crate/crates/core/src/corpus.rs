//! Review snapshots, broad-domain mapping, ground-truth sieve and 1:N sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::parse_bracketed;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

id_type!(ReviewId);
id_type!(ReviewerId);
id_type!(ProductId);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Review {
    pub review_id: ReviewId,
    pub reviewer_id: ReviewerId,
    pub product_id: ProductId,
    pub category: String,
    pub rating: u8,
    pub title: String,
    pub body: String,
    /// Bracketed parse trees, one per sentence. Empty for unparsed reviews.
    #[serde(default)]
    pub sentences: Vec<String>,
    pub verified_purchase: bool,
    pub posted_at: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Product {
    pub product_id: ProductId,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRecord {
    #[serde(default)]
    task_id: Option<String>,
    product_id: ProductId,
}

/// Products named in crowdsourced review-writing tasks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskSet {
    pub root_products: BTreeSet<ProductId>,
}

impl TaskSet {
    pub fn contains(&self, p: &ProductId) -> bool {
        self.root_products.contains(p)
    }

    pub fn is_empty(&self) -> bool {
        self.root_products.is_empty()
    }
}

impl FromIterator<ProductId> for TaskSet {
    fn from_iter<I: IntoIterator<Item = ProductId>>(iter: I) -> Self {
        TaskSet {
            root_products: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    Books,
    Health,
    Electronics,
    Movies,
    Other,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Books,
        Domain::Health,
        Domain::Electronics,
        Domain::Movies,
        Domain::Other,
    ];
    /// The four broad domains used for train/test runs.
    pub const BROAD: [Domain; 4] = [Domain::Books, Domain::Health, Domain::Electronics, Domain::Movies];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Books => "Books",
            Domain::Health => "Health",
            Domain::Electronics => "Electronics",
            Domain::Movies => "Movies",
            Domain::Other => "Other",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .iter()
            .copied()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown domain {s}")))
    }
}

const DOMAIN_TABLE: [(&str, Domain); 10] = [
    ("Hardcover", Domain::Books),
    ("Paperback", Domain::Books),
    ("Kindle Edition", Domain::Books),
    ("Health and Beauty", Domain::Health),
    ("Health and Personal Care", Domain::Health),
    ("Electronics", Domain::Electronics),
    ("Personal Computers", Domain::Electronics),
    ("Cell Phones", Domain::Electronics),
    ("Movies and TV", Domain::Movies),
    ("DVD", Domain::Movies),
];

/// Maps a fine product category to its broad domain. Case-insensitive exact
/// match on the merged categories; anything else is `Other`.
pub fn assign_broad_domain(category: &str) -> Domain {
    DOMAIN_TABLE
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(category))
        .map(|(_, d)| *d)
        .unwrap_or(Domain::Other)
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Deceptive,
    Authentic,
}

impl Label {
    pub fn is_deceptive(self) -> bool {
        self == Label::Deceptive
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Deceptive => "deceptive",
            Label::Authentic => "authentic",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deceptive" => Ok(Label::Deceptive),
            "authentic" => Ok(Label::Authentic),
            _ => Err(Error::invalid(format!("unknown label {s}"))),
        }
    }
}

/// Outcome of the ground-truth sieve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SieveLabel {
    Deceptive,
    Authentic,
    Excluded,
}

impl SieveLabel {
    pub const ALL: [SieveLabel; 3] = [SieveLabel::Deceptive, SieveLabel::Authentic, SieveLabel::Excluded];

    pub fn class(self) -> Option<Label> {
        match self {
            SieveLabel::Deceptive => Some(Label::Deceptive),
            SieveLabel::Authentic => Some(Label::Authentic),
            SieveLabel::Excluded => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SieveLabel::Deceptive => "deceptive",
            SieveLabel::Authentic => "authentic",
            SieveLabel::Excluded => "excluded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReview {
    pub review: Review,
    pub label: SieveLabel,
    pub domain: Domain,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCorpus {
    pub reviews: Vec<LabeledReview>,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn get(&self, i: usize) -> &LabeledReview {
        &self.reviews[i]
    }

    /// Indices of reviews with the given label whose record passes `scope`.
    pub fn indices(&self, label: SieveLabel, scope: impl Fn(&LabeledReview) -> bool) -> Vec<usize> {
        self.reviews
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label && scope(r))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn in_domain(&self, label: SieveLabel, domain: Domain) -> Vec<usize> {
        self.indices(label, |r| r.domain == domain)
    }

    /// All deceptive reviews in scope plus `ratio` times as many authentic ones,
    /// sampled uniformly without replacement.
    pub fn sample_truthful(
        &self,
        scope: impl Fn(&LabeledReview) -> bool,
        ratio: usize,
        seed: u64,
    ) -> Result<ExperimentSet> {
        let deceptive = self.indices(SieveLabel::Deceptive, &scope);
        let authentic = self.indices(SieveLabel::Authentic, &scope);
        sample_truthful(&deceptive, &authentic, ratio, seed)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.reviews)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let reviews: Vec<LabeledReview> = read_jsonl(path)?;
        Ok(LabeledCorpus { reviews })
    }
}

/// Indices into a [`LabeledCorpus`], split by class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExperimentSet {
    pub deceptive: Vec<usize>,
    pub authentic: Vec<usize>,
}

impl ExperimentSet {
    pub fn len(&self) -> usize {
        self.deceptive.len() + self.authentic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(index, label)` pairs, deceptive first, each part in stored order.
    pub fn labeled(&self) -> Vec<(usize, Label)> {
        self.deceptive
            .iter()
            .map(|&i| (i, Label::Deceptive))
            .chain(self.authentic.iter().map(|&i| (i, Label::Authentic)))
            .collect()
    }

    pub fn extend(&mut self, other: &ExperimentSet) {
        self.deceptive.extend_from_slice(&other.deceptive);
        self.authentic.extend_from_slice(&other.authentic);
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a master seed and a tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer over the mix.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keeps every deceptive index and draws `ratio * |deceptive|` authentic indices
/// uniformly without replacement. The authentic sample is returned sorted.
pub fn sample_truthful(
    deceptive: &[usize],
    authentic_pool: &[usize],
    ratio: usize,
    seed: u64,
) -> Result<ExperimentSet> {
    if ratio == 0 {
        return Err(Error::invalid("sampling ratio must be positive"));
    }
    let needed = ratio * deceptive.len();
    if authentic_pool.len() < needed {
        return Err(Error::Shortfall {
            needed,
            available: authentic_pool.len(),
            shortfall: needed - authentic_pool.len(),
        });
    }
    let mut pool = authentic_pool.to_vec();
    pool.sort_unstable();
    let mut rng = rng_from_seed(seed);
    let (chosen, _) = pool.partial_shuffle(&mut rng, needed);
    let mut authentic = chosen.to_vec();
    authentic.sort_unstable();
    let mut deceptive = deceptive.to_vec();
    deceptive.sort_unstable();
    Ok(ExperimentSet {
        deceptive,
        authentic,
    })
}

/// Applies the two-condition sieve: deceptive iff the reviewer is flagged and the
/// product is a root-task product; authentic iff neither is flagged; otherwise excluded.
pub fn sieve_labels(
    reviews: &[Review],
    deceptive_reviewers: &BTreeSet<ReviewerId>,
    tasks: &TaskSet,
) -> LabeledCorpus {
    let reviews = reviews
        .iter()
        .map(|r| {
            let reviewer_flagged = deceptive_reviewers.contains(&r.reviewer_id);
            let product_flagged = tasks.contains(&r.product_id);
            let label = match (reviewer_flagged, product_flagged) {
                (true, true) => SieveLabel::Deceptive,
                (false, false) => SieveLabel::Authentic,
                _ => SieveLabel::Excluded,
            };
            LabeledReview {
                review: r.clone(),
                label,
                domain: assign_broad_domain(&r.category),
            }
        })
        .collect();
    LabeledCorpus { reviews }
}

fn read_lines<T: DeserializeOwned>(
    path: &Path,
    mut check: impl FnMut(&T) -> std::result::Result<(), String>,
) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        check(&record).map_err(|message| Error::Record {
            line: i + 1,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_lines(path, |_| Ok(()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

fn check_review(r: &Review) -> std::result::Result<(), String> {
    if !(1..=5).contains(&r.rating) {
        return Err(format!("rating {} out of range 1-5", r.rating));
    }
    for (k, s) in r.sentences.iter().enumerate() {
        parse_bracketed(s).map_err(|e| format!("sentence {}: {}", k + 1, e))?;
    }
    Ok(())
}

/// Reads a line-delimited review file. Malformed records and duplicate ids are
/// rejected with the offending line or id.
pub fn load_reviews(path: &Path) -> Result<Vec<Review>> {
    // Ratings are parsed as u8 first so that e.g. 7 reaches the range check
    // rather than failing as a type error.
    let reviews: Vec<Review> = read_lines(path, check_review)?;
    let mut seen = BTreeSet::new();
    for r in &reviews {
        if !seen.insert(&r.review_id) {
            return Err(Error::DuplicateId(r.review_id.0.clone()));
        }
    }
    Ok(reviews)
}

pub fn load_products(path: &Path) -> Result<BTreeMap<ProductId, Product>> {
    let products: Vec<Product> = read_jsonl(path)?;
    let mut map = BTreeMap::new();
    for p in products {
        let id = p.product_id.clone();
        if map.insert(id.clone(), p).is_some() {
            return Err(Error::DuplicateId(id.0));
        }
    }
    Ok(map)
}

pub fn load_tasks(path: &Path) -> Result<TaskSet> {
    let records: Vec<TaskRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(|t| t.product_id).collect())
}

pub fn write_tasks(path: &Path, tasks: &TaskSet) -> Result<()> {
    let records: Vec<TaskRecord> = tasks
        .root_products
        .iter()
        .map(|p| TaskRecord {
            task_id: None,
            product_id: p.clone(),
        })
        .collect();
    write_jsonl(path, &records)
}

pub fn reviewer_ids(reviews: &[Review]) -> BTreeSet<ReviewerId> {
    reviews.iter().map(|r| r.reviewer_id.clone()).collect()
}

/// Reviews, products and root tasks loaded together.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub reviews: Vec<Review>,
    pub products: BTreeMap<ProductId, Product>,
    pub reviewers: BTreeSet<ReviewerId>,
    pub tasks: TaskSet,
}

impl Snapshot {
    pub fn load(reviews: &Path, products: &Path, tasks: &Path) -> Result<Self> {
        let mut reviews = load_reviews(reviews)?;
        reviews.sort_by(|a, b| a.review_id.cmp(&b.review_id));
        let reviewers = reviewer_ids(&reviews);
        Ok(Snapshot {
            reviews,
            products: load_products(products)?,
            reviewers,
            tasks: load_tasks(tasks)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub reviews: usize,
    pub reviewers: usize,
    pub products: usize,
}

/// Counts per sieve label and per (domain, label).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsReport {
    pub by_label: BTreeMap<SieveLabel, LabelCounts>,
    pub by_domain: BTreeMap<Domain, BTreeMap<SieveLabel, usize>>,
}

pub fn corpus_stats(corpus: &LabeledCorpus) -> StatsReport {
    let mut report = StatsReport::default();
    for label in SieveLabel::ALL {
        let rows: Vec<&LabeledReview> = corpus.reviews.iter().filter(|r| r.label == label).collect();
        let reviewers: BTreeSet<_> = rows.iter().map(|r| &r.review.reviewer_id).collect();
        let products: BTreeSet<_> = rows.iter().map(|r| &r.review.product_id).collect();
        report.by_label.insert(
            label,
            LabelCounts {
                reviews: rows.len(),
                reviewers: reviewers.len(),
                products: products.len(),
            },
        );
        for d in Domain::ALL {
            let n = rows.iter().filter(|r| r.domain == d).count();
            *report.by_domain.entry(d).or_default().entry(label).or_default() = n;
        }
    }
    report
}

impl StatsReport {
    pub fn label(&self, l: SieveLabel) -> LabelCounts {
        self.by_label.get(&l).copied().unwrap_or_default()
    }

    pub fn domain(&self, d: Domain, l: SieveLabel) -> usize {
        self.by_domain.get(&d).and_then(|m| m.get(&l)).copied().unwrap_or(0)
    }

    fn rows(&self) -> Vec<(String, [usize; 3])> {
        let mut rows = Vec::new();
        let per_label = |f: fn(&LabelCounts) -> usize| SieveLabel::ALL.map(|l| f(&self.label(l)));
        rows.push(("reviews".to_string(), per_label(|c| c.reviews)));
        rows.push(("reviewers".to_string(), per_label(|c| c.reviewers)));
        rows.push(("products".to_string(), per_label(|c| c.products)));
        for d in Domain::ALL {
            rows.push((format!("reviews:{}", d), SieveLabel::ALL.map(|l| self.domain(d, l))));
        }
        rows
    }

    pub fn render_table(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}\n",
            "", "deceptive", "authentic", "excluded"
        );
        for (name, v) in rows {
            out.push_str(&format!(
                "{:<width$}  {:>10}  {:>10}  {:>10}\n",
                name, v[0], v[1], v[2]
            ));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("row,deceptive,authentic,excluded\n");
        for (name, v) in self.rows() {
            out.push_str(&format!("{},{},{},{}\n", name, v[0], v[1], v[2]));
        }
        out
    }
}
