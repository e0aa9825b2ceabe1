//! Feature families and the feature space that stitches them together.
//!
//! A [`FeatureSpace`] is built from training documents only and is immutable
//! afterwards. Family blocks always appear in [`FeatureFamily::ALL`] order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Label, Product, ProductId, Review};
use crate::error::{Error, Result};
use crate::treebank::{parse_bracketed, ParseTree};
use crate::treequery::{complexity_profile, ComplexityVector, RATIO_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Unigram,
    Pos,
    Lexicon,
    ApRules,
    UpRules,
    AdPhrases,
    TitleOverlap,
    Complexity,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 8] = [
        FeatureFamily::Unigram,
        FeatureFamily::Pos,
        FeatureFamily::Lexicon,
        FeatureFamily::ApRules,
        FeatureFamily::UpRules,
        FeatureFamily::AdPhrases,
        FeatureFamily::TitleOverlap,
        FeatureFamily::Complexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::Unigram => "unigram",
            FeatureFamily::Pos => "pos",
            FeatureFamily::Lexicon => "lexicon",
            FeatureFamily::ApRules => "ap_rules",
            FeatureFamily::UpRules => "up_rules",
            FeatureFamily::AdPhrases => "ad_phrases",
            FeatureFamily::TitleOverlap => "title_overlap",
            FeatureFamily::Complexity => "complexity",
        }
    }

    fn data_driven(self) -> bool {
        matches!(
            self,
            FeatureFamily::Unigram | FeatureFamily::ApRules | FeatureFamily::UpRules
        )
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "ap" => "ap_rules",
            "up" => "up_rules",
            "ad" => "ad_phrases",
            "comp" => "complexity",
            "liwc" => "lexicon",
            "title" => "title_overlap",
            other => other,
        };
        FeatureFamily::ALL
            .iter()
            .copied()
            .find(|f| f.name() == alias)
            .ok_or_else(|| Error::invalid(format!("unknown feature family {s}")))
    }
}

pub const DEFAULT_MIN_DF: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub families: BTreeSet<FeatureFamily>,
    /// Document-frequency threshold for the unigram and rule vocabularies.
    pub min_df: usize,
}

impl FeatureConfig {
    pub fn new(families: impl IntoIterator<Item = FeatureFamily>) -> Self {
        FeatureConfig {
            families: families.into_iter().collect(),
            min_df: DEFAULT_MIN_DF,
        }
    }

    pub fn with_min_df(mut self, min_df: usize) -> Self {
        self.min_df = min_df;
        self
    }

    /// Parses `"up_rules+pos+ad+comp"` style combinations.
    pub fn parse(spec: &str) -> Result<Self> {
        let fams = spec
            .split(['+', ','])
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if fams.is_empty() {
            return Err(Error::invalid("no feature families given"));
        }
        Ok(FeatureConfig::new(fams))
    }

    pub fn label(&self) -> String {
        self.families.iter().map(|f| f.name()).collect::<Vec<_>>().join("+")
    }
}

/// Lower-cased tokens: maximal alphanumeric runs, keeping apostrophes and
/// hyphens that sit between two alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if matches!(c, '\'' | '\u{2019}' | '-')
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Penn Treebank part-of-speech tags, the fixed POS feature set.
pub const POS_TAGS: [&str; 45] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", "#", "$", ".", ",", ":", "``", "''", "-LRB-",
    "-RRB-",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconCategory {
    pub id: usize,
    pub name: String,
    /// Entries ending in `*` match by prefix.
    pub entries: Vec<String>,
}

impl LexiconCategory {
    pub fn matches(&self, token: &str) -> bool {
        self.entries.iter().any(|e| match e.strip_suffix('*') {
            Some(prefix) => token.starts_with(prefix),
            None => token == e,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryLexicon {
    pub categories: Vec<LexiconCategory>,
}

impl CategoryLexicon {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut lex = CategoryLexicon::default();
        for (cat, entry) in pairs {
            lex.add(cat, entry);
        }
        lex
    }

    fn add(&mut self, category: &str, entry: &str) {
        let entry = entry.trim().to_lowercase();
        let pos = match self.categories.iter().position(|c| c.name == category) {
            Some(p) => p,
            None => {
                self.categories.push(LexiconCategory {
                    id: self.categories.len(),
                    name: category.to_string(),
                    entries: Vec::new(),
                });
                self.categories.len() - 1
            }
        };
        let cat = &mut self.categories[pos];
        if !cat.entries.contains(&entry) {
            cat.entries.push(entry);
        }
    }

    /// One `category<TAB>entry` per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = CategoryLexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, entry) = line.split_once('\t').ok_or_else(|| Error::Record {
                line: i + 1,
                message: "expected category<TAB>entry".into(),
            })?;
            if cat.trim().is_empty() || entry.trim().is_empty() || entry.trim() == "*" {
                return Err(Error::Record {
                    line: i + 1,
                    message: "empty category or entry".into(),
                });
            }
            if entry.trim().contains(char::is_whitespace) {
                return Err(Error::Record {
                    line: i + 1,
                    message: "lexicon entries are single tokens".into(),
                });
            }
            lex.add(cat.trim(), entry);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdPhraseList {
    pub phrases: Vec<String>,
}

impl AdPhraseList {
    /// Phrases are normalized through [`tokenize`]; each must have 1 to 4 tokens.
    /// Repeats are dropped, keeping the first occurrence.
    pub fn new<S: AsRef<str>>(phrases: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (i, p) in phrases.into_iter().enumerate() {
            let toks = tokenize(p.as_ref());
            if toks.is_empty() || toks.len() > 4 {
                return Err(Error::Record {
                    line: i + 1,
                    message: format!("phrase '{}' must have 1 to 4 tokens", p.as_ref()),
                });
            }
            let norm = toks.join(" ");
            if seen.insert(norm.clone()) {
                out.push(norm);
            }
        }
        Ok(AdPhraseList { phrases: out })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self::new(lines)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// External word lists a feature space may need.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub lexicon: Option<CategoryLexicon>,
    pub phrases: Option<AdPhraseList>,
}

/// A review reduced to what the feature families read.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub ap_rules: Vec<String>,
    pub up_rules: Vec<String>,
    pub complexity: ComplexityVector,
    pub title_overlap: (usize, usize),
}

impl Document {
    pub fn from_trees(text: &str, trees: &[ParseTree], product_text: Option<&str>) -> Self {
        let tokens = tokenize(text);
        let title_overlap = product_text
            .map(|p| title_overlap(&tokens, &tokenize(p)))
            .unwrap_or((0, 0));
        Document {
            tags: trees.iter().flat_map(|t| t.pos_tags()).map(str::to_string).collect(),
            ap_rules: trees
                .iter()
                .flat_map(|t| t.production_rules(true))
                .map(|r| r.to_string())
                .collect(),
            up_rules: trees
                .iter()
                .flat_map(|t| t.production_rules(false))
                .map(|r| r.to_string())
                .collect(),
            complexity: complexity_profile(trees),
            tokens,
            title_overlap,
        }
    }

    pub fn from_review(review: &Review, product: Option<&Product>) -> Result<Self> {
        let trees = review
            .sentences
            .iter()
            .map(|s| parse_bracketed(s))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let text = format!("{} {}", review.title, review.body);
        let product_text = product.map(|p| format!("{} {}", p.title, p.description));
        Ok(Self::from_trees(&text, &trees, product_text.as_deref()))
    }

    fn items(&self, family: FeatureFamily) -> &[String] {
        match family {
            FeatureFamily::Unigram => &self.tokens,
            FeatureFamily::ApRules => &self.ap_rules,
            FeatureFamily::UpRules => &self.up_rules,
            _ => &[],
        }
    }
}

/// Builds documents for many reviews in parallel, preserving order.
pub fn documents(reviews: &[&Review], products: &BTreeMap<ProductId, Product>) -> Result<Vec<Document>> {
    reviews
        .par_iter()
        .map(|r| Document::from_review(r, products.get(&r.product_id)))
        .collect()
}

/// Items of a data-driven family present in at least `min_df` documents, sorted.
pub fn build_vocab(docs: &[&Document], family: FeatureFamily, min_df: usize) -> Result<Vec<String>> {
    if !family.data_driven() {
        return Err(Error::invalid(format!("family {family} has a fixed vocabulary")));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        let distinct: BTreeSet<&str> = d.items(family).iter().map(String::as_str).collect();
        for item in distinct {
            *df.entry(item).or_default() += 1;
        }
    }
    let vocab: Vec<String> = df
        .into_iter()
        .filter(|(_, n)| *n >= min_df.max(1))
        .map(|(k, _)| k.to_string())
        .collect();
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary(family.name().to_string()));
    }
    Ok(vocab)
}

fn relative_frequencies(items: &[String], index: &HashMap<String, usize>) -> Vec<(usize, f64)> {
    if items.is_empty() {
        return Vec::new();
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for it in items {
        if let Some(&i) = index.get(it) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let n = items.len() as f64;
    counts.into_iter().map(|(i, c)| (i, c as f64 / n)).collect()
}

fn index_of(vocab: &[String]) -> HashMap<String, usize> {
    vocab.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect()
}

/// Relative frequency of in-vocabulary tokens; positions follow `vocab`.
pub fn unigram_features(tokens: &[String], vocab: &[String]) -> Vec<(usize, f64)> {
    relative_frequencies(tokens, &index_of(vocab))
}

/// Relative frequency of each fixed POS tag among all tags of the trees.
pub fn pos_features(trees: &[ParseTree]) -> Vec<(usize, f64)> {
    let tags: Vec<String> = trees.iter().flat_map(|t| t.pos_tags()).map(str::to_string).collect();
    pos_values(&tags)
}

fn pos_values(tags: &[String]) -> Vec<(usize, f64)> {
    let index: HashMap<String, usize> = POS_TAGS.iter().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
    relative_frequencies(tags, &index)
}

/// Share of tokens matched by each category, one position per category.
pub fn lexicon_features(tokens: &[String], lexicon: &CategoryLexicon) -> Vec<(usize, f64)> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let n = tokens.len() as f64;
    lexicon
        .categories
        .iter()
        .enumerate()
        .filter_map(|(i, cat)| {
            let hits = tokens.iter().filter(|t| cat.matches(t)).count();
            (hits > 0).then(|| (i, hits as f64 / n))
        })
        .collect()
}

/// Relative frequency of each vocabulary rule among the trees' rules of one mode.
pub fn production_features(trees: &[ParseTree], lexicalized: bool, vocab: &[String]) -> Vec<(usize, f64)> {
    let rules: Vec<String> = trees
        .iter()
        .flat_map(|t| t.production_rules(lexicalized))
        .map(|r| r.to_string())
        .collect();
    relative_frequencies(&rules, &index_of(vocab))
}

fn contains_run(tokens: &[String], phrase: &[&str]) -> bool {
    !phrase.is_empty()
        && tokens.len() >= phrase.len()
        && tokens
            .windows(phrase.len())
            .any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

/// 1 for every phrase occurring as a contiguous token run; absent phrases are omitted.
pub fn ad_phrase_features(tokens: &[String], phrases: &AdPhraseList) -> Vec<(usize, f64)> {
    phrases
        .phrases
        .iter()
        .enumerate()
        .filter(|(_, p)| contains_run(tokens, &p.split(' ').collect::<Vec<_>>()))
        .map(|(i, _)| (i, 1.0))
        .collect()
}

/// Distinct unigram and bigram types shared by the review and product tokens.
pub fn title_overlap(review_tokens: &[String], product_tokens: &[String]) -> (usize, usize) {
    let uni = |t: &[String]| t.iter().cloned().collect::<HashSet<_>>();
    let bi = |t: &[String]| {
        t.windows(2)
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect::<HashSet<_>>()
    };
    let u = uni(review_tokens).intersection(&uni(product_tokens)).count();
    let b = bi(review_tokens).intersection(&bi(product_tokens)).count();
    (u, b)
}

pub fn title_overlap_features(review: &Review, product: Option<&Product>) -> (usize, usize) {
    match product {
        None => (0, 0),
        Some(p) => title_overlap(
            &tokenize(&format!("{} {}", review.title, review.body)),
            &tokenize(&format!("{} {}", p.title, p.description)),
        ),
    }
}

/// Sparse vector; indices strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}

impl FeatureVector {
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>, label: Option<Label>) -> Self {
        pairs.sort_by_key(|p| p.0);
        pairs.dedup_by_key(|p| p.0);
        FeatureVector {
            indices: pairs.iter().map(|p| p.0 as u32).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
            label,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FeatureVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            label: self.label,
        }
    }

    /// `label idx:value ...` with 1-based indices; label is `+1`, `-1` or `0`.
    pub fn to_svmlight(&self) -> String {
        let mut s = String::from(match self.label {
            Some(Label::Deceptive) => "+1",
            Some(Label::Authentic) => "-1",
            None => "0",
        });
        for (i, v) in self.iter() {
            let _ = write!(s, " {}:{}", i + 1, v);
        }
        s
    }

    pub fn from_svmlight(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let label = match parts.next() {
            Some("+1") | Some("1") => Some(Label::Deceptive),
            Some("-1") => Some(Label::Authentic),
            Some("0") => None,
            other => return Err(Error::Format(format!("bad label {:?}", other))),
        };
        let mut pairs = Vec::new();
        for p in parts {
            let (i, v) = p
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("bad pair {p}")))?;
            let i: usize = i.parse().map_err(|_| Error::Format(format!("bad index {i}")))?;
            let v: f64 = v.parse().map_err(|_| Error::Format(format!("bad value {v}")))?;
            if i == 0 {
                return Err(Error::Format("indices are 1-based".into()));
            }
            pairs.push((i - 1, v));
        }
        let fv = FeatureVector::from_pairs(pairs, label);
        Ok(fv)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    family: FeatureFamily,
    offset: usize,
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Block {
    fn new(family: FeatureFamily, offset: usize, items: Vec<String>) -> Self {
        let index = index_of(&items);
        Block {
            family,
            offset,
            items,
            index,
        }
    }
}

const MANIFEST_MAGIC: &str = "revspam feature-space v1";

/// Named dimensions for the enabled families plus what is needed to fill them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    config: FeatureConfig,
    blocks: Vec<Block>,
    lexicon: Option<CategoryLexicon>,
    phrases: Option<AdPhraseList>,
    hash: String,
}

impl FeatureSpace {
    /// Builds vocabularies for the enabled families from `train` documents.
    pub fn build(config: &FeatureConfig, train: &[&Document], resources: &Resources) -> Result<Self> {
        let mut items_by_family = Vec::new();
        for &family in FeatureFamily::ALL.iter().filter(|f| config.families.contains(f)) {
            let items = match family {
                FeatureFamily::Unigram | FeatureFamily::ApRules | FeatureFamily::UpRules => {
                    build_vocab(train, family, config.min_df)?
                }
                FeatureFamily::Pos => POS_TAGS.iter().map(|s| s.to_string()).collect(),
                FeatureFamily::Lexicon => resources
                    .lexicon
                    .as_ref()
                    .ok_or_else(|| Error::MissingVocabulary(family.name().into()))?
                    .categories
                    .iter()
                    .map(|c| c.name.clone())
                    .collect(),
                FeatureFamily::AdPhrases => resources
                    .phrases
                    .as_ref()
                    .ok_or_else(|| Error::MissingVocabulary(family.name().into()))?
                    .phrases
                    .clone(),
                FeatureFamily::TitleOverlap => vec!["unigram_overlap".into(), "bigram_overlap".into()],
                FeatureFamily::Complexity => RATIO_NAMES.iter().map(|s| s.to_string()).collect(),
            };
            items_by_family.push((family, items));
        }
        let lexicon = config
            .families
            .contains(&FeatureFamily::Lexicon)
            .then(|| resources.lexicon.clone())
            .flatten();
        let phrases = config
            .families
            .contains(&FeatureFamily::AdPhrases)
            .then(|| resources.phrases.clone())
            .flatten();
        Ok(Self::from_parts(config.clone(), items_by_family, lexicon, phrases))
    }

    fn from_parts(
        config: FeatureConfig,
        items_by_family: Vec<(FeatureFamily, Vec<String>)>,
        lexicon: Option<CategoryLexicon>,
        phrases: Option<AdPhraseList>,
    ) -> Self {
        let mut offset = 0;
        let blocks = items_by_family
            .into_iter()
            .map(|(family, items)| {
                let b = Block::new(family, offset, items);
                offset += b.items.len();
                b
            })
            .collect();
        let mut space = FeatureSpace {
            config,
            blocks,
            lexicon,
            phrases,
            hash: String::new(),
        };
        space.hash = hex::encode(Sha256::digest(space.manifest_body().as_bytes()));
        space
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.items.len()).sum()
    }

    /// SHA-256 over the manifest body: families, config and every vocabulary.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn families(&self) -> Vec<FeatureFamily> {
        self.blocks.iter().map(|b| b.family).collect()
    }

    /// Global index range of a family's block.
    pub fn block_range(&self, family: FeatureFamily) -> Option<std::ops::Range<usize>> {
        self.block(family).map(|b| b.offset..b.offset + b.items.len())
    }

    fn block(&self, family: FeatureFamily) -> Option<&Block> {
        self.blocks.iter().find(|b| b.family == family)
    }

    pub fn vocabulary(&self, family: FeatureFamily) -> Option<&[String]> {
        self.block(family).map(|b| b.items.as_slice())
    }

    pub fn dimension_name(&self, index: usize) -> Option<String> {
        self.blocks
            .iter()
            .find(|b| index >= b.offset && index < b.offset + b.items.len())
            .map(|b| format!("{}:{}", b.family, b.items[index - b.offset]))
    }

    pub fn dimension_names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|b| b.items.iter().map(move |it| format!("{}:{}", b.family, it)))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let (fam, item) = name.split_once(':')?;
        let fam: FeatureFamily = fam.parse().ok()?;
        let b = self.block(fam)?;
        b.index.get(item).map(|i| b.offset + i)
    }

    fn family_values(&self, family: FeatureFamily, doc: &Document, block: &Block) -> Result<Vec<(usize, f64)>> {
        Ok(match family {
            FeatureFamily::Unigram => relative_frequencies(&doc.tokens, &block.index),
            FeatureFamily::Pos => pos_values(&doc.tags),
            FeatureFamily::Lexicon => {
                let lex = self
                    .lexicon
                    .as_ref()
                    .ok_or_else(|| Error::MissingVocabulary(family.name().into()))?;
                lexicon_features(&doc.tokens, lex)
            }
            FeatureFamily::ApRules => relative_frequencies(&doc.ap_rules, &block.index),
            FeatureFamily::UpRules => relative_frequencies(&doc.up_rules, &block.index),
            FeatureFamily::AdPhrases => {
                let phrases = self
                    .phrases
                    .as_ref()
                    .ok_or_else(|| Error::MissingVocabulary(family.name().into()))?;
                ad_phrase_features(&doc.tokens, phrases)
            }
            FeatureFamily::TitleOverlap => {
                let (u, b) = doc.title_overlap;
                [(0, u as f64), (1, b as f64)].into_iter().filter(|p| p.1 != 0.0).collect()
            }
            FeatureFamily::Complexity => doc
                .complexity
                .ratios
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        })
    }

    /// Concatenates the enabled families' sub-vectors in family order.
    pub fn assemble(&self, doc: &Document, label: Option<Label>) -> Result<FeatureVector> {
        let mut pairs = Vec::new();
        for &family in &self.config.families {
            let block = self
                .block(family)
                .ok_or_else(|| Error::MissingVocabulary(family.name().into()))?;
            for (i, v) in self.family_values(family, doc, block)? {
                pairs.push((block.offset + i, v));
            }
        }
        Ok(FeatureVector::from_pairs(pairs, label))
    }

    pub fn assemble_all(&self, docs: &[(&Document, Option<Label>)]) -> Result<Vec<FeatureVector>> {
        docs.par_iter().map(|(d, l)| self.assemble(d, *l)).collect()
    }

    fn manifest_body(&self) -> String {
        let mut out = String::new();
        let fams: Vec<&str> = self.config.families.iter().map(|f| f.name()).collect();
        let _ = writeln!(out, "config families={} min_df={}", fams.join(","), self.config.min_df);
        let _ = writeln!(out, "dim {}", self.dim());
        for b in &self.blocks {
            let _ = writeln!(out, "family {} {}", b.family, b.items.len());
            for it in &b.items {
                match (b.family, &self.lexicon) {
                    (FeatureFamily::Lexicon, Some(lex)) => {
                        let cat = lex.categories.iter().find(|c| &c.name == it).expect("lexicon block");
                        let _ = writeln!(out, "{}\t{}", it, cat.entries.join(" "));
                    }
                    _ => {
                        let _ = writeln!(out, "{}", it);
                    }
                }
            }
        }
        out
    }

    /// Versioned text manifest: magic line, hash line, then the hashed body.
    pub fn to_manifest(&self) -> String {
        format!("{}\nhash {}\n{}", MANIFEST_MAGIC, self.hash, self.manifest_body())
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("feature manifest: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            return Err(bad("missing or unsupported version line"));
        }
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("hash "))
            .ok_or_else(|| bad("missing hash line"))?
            .to_string();
        let config_line = lines.next().ok_or_else(|| bad("missing config line"))?;
        let mut families = BTreeSet::new();
        let mut min_df = None;
        for kv in config_line.strip_prefix("config ").ok_or_else(|| bad("bad config line"))?.split(' ') {
            match kv.split_once('=') {
                Some(("families", v)) => {
                    for f in v.split(',').filter(|s| !s.is_empty()) {
                        families.insert(f.parse::<FeatureFamily>()?);
                    }
                }
                Some(("min_df", v)) => min_df = Some(v.parse().map_err(|_| bad("bad min_df"))?),
                _ => return Err(bad("unknown config entry")),
            }
        }
        let config = FeatureConfig {
            families,
            min_df: min_df.ok_or_else(|| bad("missing min_df"))?,
        };
        let _dim = lines.next().and_then(|l| l.strip_prefix("dim ")).ok_or_else(|| bad("missing dim"))?;
        let mut items_by_family = Vec::new();
        let mut lexicon = None;
        while let Some(header) = lines.next() {
            let rest = header.strip_prefix("family ").ok_or_else(|| bad("expected family header"))?;
            let (name, n) = rest.split_once(' ').ok_or_else(|| bad("bad family header"))?;
            let family: FeatureFamily = name.parse()?;
            let n: usize = n.parse().map_err(|_| bad("bad family size"))?;
            let mut items = Vec::with_capacity(n);
            let mut lex = CategoryLexicon::default();
            for _ in 0..n {
                let line = lines.next().ok_or_else(|| bad("truncated vocabulary"))?;
                if family == FeatureFamily::Lexicon {
                    let (cat, entries) = line.split_once('\t').ok_or_else(|| bad("bad lexicon line"))?;
                    lex.categories.push(LexiconCategory {
                        id: lex.categories.len(),
                        name: cat.to_string(),
                        entries: entries.split(' ').filter(|e| !e.is_empty()).map(str::to_string).collect(),
                    });
                    items.push(cat.to_string());
                } else {
                    items.push(line.to_string());
                }
            }
            if family == FeatureFamily::Lexicon {
                lexicon = Some(lex);
            }
            items_by_family.push((family, items));
        }
        let phrases = items_by_family
            .iter()
            .find(|(f, _)| *f == FeatureFamily::AdPhrases)
            .map(|(_, items)| AdPhraseList { phrases: items.clone() });
        let space = Self::from_parts(config, items_by_family, lexicon, phrases);
        if space.hash != hash {
            return Err(bad("hash mismatch"));
        }
        Ok(space)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_manifest()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest(&text)
    }
}
