//! Deceptive-class metrics and the experimental protocols: in-domain k-fold,
//! cross-domain transfer (optionally augmented with the `Other` pool),
//! learning curves and reviewer-level transfer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{train, MaxentModel, TrainConfig};
use crate::corpus::{
    derive_seed, rng_from_seed, Domain, ExperimentSet, Label, LabeledCorpus, Product,
    ProductId, ReviewerId, SieveLabel,
};
use crate::error::{Error, Result};
use crate::features::{Document, FeatureConfig, FeatureSpace, FeatureVector, Resources};

/// Recall, precision and F1 of the deceptive class, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Prf { recall, precision, f1 }
    }

    pub fn as_percent(&self) -> [f64; 3] {
        [self.recall * 100.0, self.precision * 100.0, self.f1 * 100.0]
    }
}

pub fn prf(predictions: &[Label], gold: &[Label]) -> Result<Prf> {
    if predictions.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: predictions.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, g) in predictions.iter().zip(gold) {
        match (p, g) {
            (Label::Deceptive, Label::Deceptive) => tp += 1,
            (Label::Deceptive, Label::Authentic) => fp += 1,
            (Label::Authentic, Label::Deceptive) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fn_ == 0 {
        return Err(Error::invalid("no gold deceptive examples"));
    }
    let recall = tp as f64 / (tp + fn_) as f64;
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    Ok(Prf::new(recall, precision))
}

/// Component-wise arithmetic mean. F1 is averaged, not recomputed.
pub fn macro_average(triples: &[Prf]) -> Result<Prf> {
    if triples.is_empty() {
        return Err(Error::invalid("nothing to average"));
    }
    let n = triples.len() as f64;
    Ok(Prf {
        recall: triples.iter().map(|t| t.recall).sum::<f64>() / n,
        precision: triples.iter().map(|t| t.precision).sum::<f64>() / n,
        f1: triples.iter().map(|t| t.f1).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub features: FeatureConfig,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Authentic reviews sampled per deceptive review.
    pub ratio: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(features: FeatureConfig, seed: u64) -> Self {
        let t = TrainConfig::default();
        ProtocolConfig {
            features,
            c: t.c,
            tol: t.tol,
            max_iter: t.max_iter,
            ratio: 3,
            threshold: 0.5,
            seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Score for one test group (a domain, fold set or reviewer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub name: String,
    pub prf: Prf,
    pub n_deceptive: usize,
    pub n_total: usize,
    /// Per-fold scores when `prf` is a fold average.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<Prf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub groups: Vec<GroupScore>,
    pub macro_avg: Prf,
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub added_deceptive: usize,
    pub added_total: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub config: ProtocolConfig,
    pub augment: bool,
    pub runs: Vec<RunResult>,
    /// Mean of the runs' macro triples when there is more than one run.
    pub meta_macro: Option<Prf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<CurvePoint>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

impl EvalReport {
    fn new(protocol: &str, config: &ProtocolConfig, augment: bool, runs: Vec<RunResult>) -> Result<Self> {
        let meta_macro = if runs.len() > 1 {
            Some(macro_average(&runs.iter().map(|r| r.macro_avg).collect::<Vec<_>>())?)
        } else {
            None
        };
        Ok(EvalReport {
            protocol: protocol.to_string(),
            config: config.clone(),
            augment,
            runs,
            meta_macro,
            curve: Vec::new(),
        })
    }

    /// Plain-text table, values as percentages with one decimal.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "protocol {}  features {}  seed {}  augment {}",
            self.protocol,
            self.config.features.label(),
            self.config.seed,
            self.augment
        );
        let _ = writeln!(
            out,
            "{:<28} {:<16} {:>8} {:>10} {:>8}",
            "run", "test", "recall", "precision", "f1"
        );
        let row = |out: &mut String, run: &str, group: &str, p: &Prf| {
            let _ = writeln!(
                out,
                "{:<28} {:<16} {:>8} {:>10} {:>8}",
                run,
                group,
                pct(p.recall),
                pct(p.precision),
                pct(p.f1)
            );
        };
        for r in &self.runs {
            for g in &r.groups {
                row(&mut out, &r.name, &g.name, &g.prf);
            }
            row(&mut out, &r.name, "macro", &r.macro_avg);
        }
        if let Some(m) = &self.meta_macro {
            row(&mut out, "all", "meta-macro", m);
        }
        if !self.curve.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:>8} {:>10} {:>8} {:>8}", "fraction", "deceptive", "total", "f1");
            for p in &self.curve {
                let _ = writeln!(
                    out,
                    "{:>8} {:>10} {:>8} {:>8}",
                    format!("{:.2}", p.fraction),
                    p.added_deceptive,
                    p.added_total,
                    pct(p.f1)
                );
            }
        }
        out
    }

    /// One row per group, macro and meta-macro, unrounded fractions.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("run,test,recall,precision,f1\n");
        let mut row = |run: &str, group: &str, p: &Prf| {
            let _ = writeln!(out, "{},{},{},{},{}", run, group, p.recall, p.precision, p.f1);
        };
        for r in &self.runs {
            for g in &r.groups {
                row(&r.name, &g.name, &g.prf);
            }
            row(&r.name, "macro", &r.macro_avg);
        }
        if let Some(m) = &self.meta_macro {
            row("all", "meta-macro", m);
        }
        out
    }

    pub fn render_curve_csv(&self) -> String {
        let mut out = String::from("fraction,added_deceptive,added_total,f1\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{},{},{}", p.fraction, p.added_deceptive, p.added_total, p.f1);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Feature space and model fitted on one training partition.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub space: FeatureSpace,
    pub model: MaxentModel,
}

/// Precomputed documents for the labeled part of a corpus plus the settings
/// every protocol shares.
pub struct Evaluator<'a> {
    corpus: &'a LabeledCorpus,
    docs: Vec<Option<Document>>,
    resources: Resources,
    config: ProtocolConfig,
}

fn stratified_folds(set: &ExperimentSet, k: usize, seed: u64) -> Vec<ExperimentSet> {
    let mut rng = rng_from_seed(seed);
    let mut folds = vec![ExperimentSet::default(); k];
    let mut dec = set.deceptive.clone();
    dec.shuffle(&mut rng);
    for (i, d) in dec.into_iter().enumerate() {
        folds[i % k].deceptive.push(d);
    }
    // Authentic indices continue the round robin so fold sizes stay balanced.
    let offset = set.deceptive.len();
    let mut auth = set.authentic.clone();
    auth.shuffle(&mut rng);
    for (i, a) in auth.into_iter().enumerate() {
        folds[(offset + i) % k].authentic.push(a);
    }
    folds
}

/// Splits each class so that about `test_fraction` of it lands in the test part.
pub fn holdout_split(set: &ExperimentSet, test_fraction: f64, seed: u64) -> (ExperimentSet, ExperimentSet) {
    let mut rng = rng_from_seed(seed);
    let mut split = |items: &[usize]| {
        let mut v = items.to_vec();
        v.shuffle(&mut rng);
        let n_test = (v.len() as f64 * test_fraction).round() as usize;
        let test = v.split_off(v.len() - n_test.min(v.len()));
        (v, test)
    };
    let (dtr, dte) = split(&set.deceptive);
    let (atr, ate) = split(&set.authentic);
    (
        ExperimentSet {
            deceptive: dtr,
            authentic: atr,
        },
        ExperimentSet {
            deceptive: dte,
            authentic: ate,
        },
    )
}

/// Randomly permutes the labels among the given examples.
pub fn shuffle_labels(examples: &[(usize, Label)], seed: u64) -> Vec<(usize, Label)> {
    let mut labels: Vec<Label> = examples.iter().map(|e| e.1).collect();
    labels.shuffle(&mut rng_from_seed(seed));
    examples.iter().map(|e| e.0).zip(labels).collect()
}

impl<'a> Evaluator<'a> {
    pub fn new(
        corpus: &'a LabeledCorpus,
        products: &BTreeMap<ProductId, Product>,
        resources: Resources,
        config: ProtocolConfig,
    ) -> Result<Self> {
        let docs = corpus
            .reviews
            .par_iter()
            .map(|r| match r.label {
                SieveLabel::Excluded => Ok(None),
                _ => Document::from_review(&r.review, products.get(&r.review.product_id)).map(Some),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Evaluator {
            corpus,
            docs,
            resources,
            config,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn with_features(&self, features: FeatureConfig) -> Evaluator<'a> {
        Evaluator {
            corpus: self.corpus,
            docs: self.docs.clone(),
            resources: self.resources.clone(),
            config: ProtocolConfig {
                features,
                ..self.config.clone()
            },
        }
    }

    fn doc(&self, i: usize) -> Result<&Document> {
        self.docs
            .get(i)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::invalid(format!("review {i} is not labeled")))
    }

    pub fn vectors(&self, space: &FeatureSpace, examples: &[(usize, Label)]) -> Result<Vec<FeatureVector>> {
        let docs = examples
            .iter()
            .map(|&(i, l)| Ok((self.doc(i)?, Some(l))))
            .collect::<Result<Vec<_>>>()?;
        space.assemble_all(&docs)
    }

    /// Builds the feature space from the training examples only and trains on them.
    pub fn fit(&self, train_set: &[(usize, Label)]) -> Result<Fitted> {
        let docs = train_set.iter().map(|&(i, _)| self.doc(i)).collect::<Result<Vec<_>>>()?;
        let space = FeatureSpace::build(&self.config.features, &docs, &self.resources)?;
        let xs = self.vectors(&space, train_set)?;
        let mut model = train(&xs, space.dim(), &self.config.train_config())?;
        model.space_hash = space.hash().to_string();
        Ok(Fitted { space, model })
    }

    pub fn predict(&self, fitted: &Fitted, examples: &[(usize, Label)]) -> Result<Vec<Label>> {
        let xs = self.vectors(&fitted.space, examples)?;
        Ok(fitted.model.predict_all(&xs, self.config.threshold))
    }

    pub fn score(&self, fitted: &Fitted, test: &[(usize, Label)]) -> Result<Prf> {
        let pred = self.predict(fitted, test)?;
        let gold: Vec<Label> = test.iter().map(|e| e.1).collect();
        prf(&pred, &gold)
    }

    fn group(&self, name: &str, fitted: &Fitted, test: &ExperimentSet) -> Result<GroupScore> {
        Ok(GroupScore {
            name: name.to_string(),
            prf: self.score(fitted, &test.labeled())?,
            n_deceptive: test.deceptive.len(),
            n_total: test.len(),
            folds: Vec::new(),
        })
    }

    /// The 1:ratio experiment set of a domain. The seed depends only on the
    /// master seed and the domain, so every protocol sees the same sample.
    pub fn domain_sample(&self, domain: Domain) -> Result<ExperimentSet> {
        let seed = derive_seed(self.config.seed, &format!("sample/{}", domain.name()));
        self.corpus.sample_truthful(|r| r.domain == domain, self.config.ratio, seed)
    }

    fn kfold_group(&self, domain: Domain, k: usize) -> Result<GroupScore> {
        let set = self.domain_sample(domain)?;
        if k < 2 || k > set.len() || set.deceptive.len() < 2 {
            return Err(Error::invalid(format!(
                "{domain}: k = {k} needs 2 <= k <= {} and at least 2 deceptive reviews ({} available)",
                set.len(),
                set.deceptive.len()
            )));
        }
        let folds = stratified_folds(&set, k, derive_seed(self.config.seed, &format!("folds/{}", domain.name())));
        let scores = folds
            .par_iter()
            .enumerate()
            .map(|(f, test)| {
                if test.deceptive.is_empty() {
                    return Ok(None);
                }
                let mut train_set = ExperimentSet::default();
                for (g, other) in folds.iter().enumerate() {
                    if g != f {
                        train_set.extend(other);
                    }
                }
                let fitted = self.fit(&train_set.labeled())?;
                self.score(&fitted, &test.labeled()).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let folds: Vec<Prf> = scores.into_iter().flatten().collect();
        Ok(GroupScore {
            name: domain.name().to_string(),
            prf: macro_average(&folds)?,
            n_deceptive: set.deceptive.len(),
            n_total: set.len(),
            folds,
        })
    }

    /// Seeded stratified k-fold inside one domain. Folds whose test part has no
    /// deceptive review are skipped when averaging.
    pub fn kfold_indomain(&self, domain: Domain, k: usize) -> Result<EvalReport> {
        let g = self.kfold_group(domain, k)?;
        let run = RunResult {
            name: format!("indomain k={k}"),
            macro_avg: g.prf,
            train_size: g.n_total,
            groups: vec![g],
        };
        EvalReport::new("indomain", &self.config, false, vec![run])
    }

    /// k-fold for each listed domain, macro-averaged across domains.
    pub fn indomain_all(&self, domains: &[Domain], k: usize) -> Result<EvalReport> {
        let groups = domains
            .iter()
            .map(|&d| self.kfold_group(d, k))
            .collect::<Result<Vec<_>>>()?;
        let run = RunResult {
            name: format!("indomain k={k}"),
            macro_avg: macro_average(&groups.iter().map(|g| g.prf).collect::<Vec<_>>())?,
            train_size: groups.iter().map(|g| g.n_total).sum(),
            groups,
        };
        EvalReport::new("indomain", &self.config, false, vec![run])
    }

    fn other_pool(&self) -> Result<ExperimentSet> {
        self.domain_sample(Domain::Other)
    }

    fn transfer_run(&self, train_domain: Domain, extra: Option<&ExperimentSet>) -> Result<RunResult> {
        let mut train_set = self.domain_sample(train_domain)?;
        if let Some(extra) = extra {
            train_set.extend(extra);
        }
        let fitted = self.fit(&train_set.labeled())?;
        let groups = Domain::BROAD
            .iter()
            .filter(|&&d| d != train_domain)
            .map(|&d| self.group(d.name(), &fitted, &self.domain_sample(d)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(RunResult {
            name: format!("train={}{}", train_domain, if extra.is_some() { "+Other" } else { "" }),
            macro_avg: macro_average(&groups.iter().map(|g| g.prf).collect::<Vec<_>>())?,
            train_size: train_set.len(),
            groups,
        })
    }

    /// Train on each broad domain (optionally plus the `Other` pool), test on the
    /// other three; meta-macro over the four runs.
    pub fn cross_domain(&self, augment_with_other: bool) -> Result<EvalReport> {
        let extra = if augment_with_other {
            Some(self.other_pool()?)
        } else {
            None
        };
        let runs = Domain::BROAD
            .par_iter()
            .map(|&d| self.transfer_run(d, extra.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        EvalReport::new("cross", &self.config, augment_with_other, runs)
    }

    /// Adds growing prefixes of the shuffled `Other` pool to the training
    /// domain. Each point keeps the sampling ratio: `f * |deceptive|` deceptive
    /// reviews and `ratio` times as many authentic ones.
    pub fn learning_curve(&self, train_domain: Domain, fractions: &[f64]) -> Result<EvalReport> {
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("curve fractions must lie in [0, 1]"));
        }
        let pool = self.other_pool()?;
        let mut rng = rng_from_seed(derive_seed(self.config.seed, "curve/order"));
        let mut dec = pool.deceptive.clone();
        dec.shuffle(&mut rng);
        let mut auth = pool.authentic.clone();
        auth.shuffle(&mut rng);
        let runs = fractions
            .par_iter()
            .map(|&f| {
                let nd = (f * dec.len() as f64).round() as usize;
                let na = (nd * self.config.ratio).min(auth.len());
                let extra = ExperimentSet {
                    deceptive: dec[..nd].to_vec(),
                    authentic: auth[..na].to_vec(),
                };
                let mut run = self.transfer_run(train_domain, (nd > 0).then_some(&extra))?;
                run.name = format!("train={}+{:.2}Other", train_domain, f);
                Ok((run, CurvePoint {
                    fraction: f,
                    added_deceptive: nd,
                    added_total: nd + na,
                    f1: 0.0,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut curve = Vec::new();
        let mut rs = Vec::new();
        for (run, mut point) in runs {
            point.f1 = run.macro_avg.f1;
            curve.push(point);
            rs.push(run);
        }
        let mut report = EvalReport::new("curve", &self.config, true, rs)?;
        report.meta_macro = None;
        report.curve = curve;
        Ok(report)
    }

    /// Trains on the listed reviewers' deceptive reviews plus sampled authentic
    /// ones and scores each test reviewer separately. Authentic samples for
    /// training and for each test reviewer are disjoint.
    pub fn reviewer_transfer(&self, train_ids: &[ReviewerId], test_ids: &[ReviewerId]) -> Result<EvalReport> {
        let train_set_ids: BTreeSet<&ReviewerId> = train_ids.iter().collect();
        let test_set_ids: BTreeSet<&ReviewerId> = test_ids.iter().collect();
        if train_ids.is_empty() || test_ids.is_empty() {
            return Err(Error::invalid("reviewer lists must be non-empty"));
        }
        if let Some(r) = train_set_ids.intersection(&test_set_ids).next() {
            return Err(Error::invalid(format!("reviewer {r} is in both train and test")));
        }
        let deceptive_of = |id: &ReviewerId| -> Result<Vec<usize>> {
            let v = self
                .corpus
                .indices(SieveLabel::Deceptive, |r| &r.review.reviewer_id == id);
            if v.is_empty() {
                return Err(Error::invalid(format!("reviewer {id} has no deceptive reviews")));
            }
            Ok(v)
        };
        let authentic = self.corpus.indices(SieveLabel::Authentic, |_| true);
        let mut train_dec = Vec::new();
        for id in train_set_ids.iter() {
            train_dec.extend(deceptive_of(id)?);
        }
        let mut tests = Vec::new();
        for id in test_set_ids.iter() {
            tests.push(((*id).clone(), deceptive_of(id)?));
        }
        let needed = self.config.ratio * (train_dec.len() + tests.iter().map(|t| t.1.len()).sum::<usize>());
        if authentic.len() < needed {
            return Err(Error::Shortfall {
                needed,
                available: authentic.len(),
                shortfall: needed - authentic.len(),
            });
        }
        let mut pool = authentic;
        pool.shuffle(&mut rng_from_seed(derive_seed(self.config.seed, "reviewer/authentic")));
        let mut cursor = 0;
        let mut take = |n: usize| {
            let v = pool[cursor..cursor + n].to_vec();
            cursor += n;
            v
        };
        let train_set = ExperimentSet {
            authentic: take(self.config.ratio * train_dec.len()),
            deceptive: train_dec,
        };
        let fitted = self.fit(&train_set.labeled())?;
        let mut groups = Vec::new();
        for (id, dec) in tests {
            let test = ExperimentSet {
                authentic: take(self.config.ratio * dec.len()),
                deceptive: dec,
            };
            groups.push(self.group(&id.0, &fitted, &test)?);
        }
        let name = format!(
            "train={}",
            train_set_ids.iter().map(|r| r.0.as_str()).collect::<Vec<_>>().join("+")
        );
        let run = RunResult {
            name,
            macro_avg: macro_average(&groups.iter().map(|g| g.prf).collect::<Vec<_>>())?,
            train_size: train_set.len(),
            groups,
        };
        EvalReport::new("reviewer", &self.config, false, vec![run])
    }
}
