use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;

use anyhow::{bail, Context, Result};
use revspam::classifier::train as train_model;
use revspam::corpus::{load_products, load_reviews, load_tasks, sieve_labels, corpus_stats, Snapshot};
use revspam::evaluation::EvalReport;
use revspam::features::{documents, AdPhraseList, CategoryLexicon, Document, Resources};
use revspam::graph::{build_graph, em_cluster, load_seeds, MStepConfig};
use revspam::treequery::{complexity_profile, COUNT_NAMES, RATIO_NAMES};
use revspam::{
    parse_bracketed, Evaluator, FeatureFamily, FeatureSpace, FeatureVector, LabeledCorpus, MaxentModel, MrfParams,
    ReviewerId, SieveLabel,
};
use serde::Serialize;

use crate::config::{domain_from_name, Loaded};
use crate::manifest::StageRun;

const REVIEWS: &str = "corpus/reviews.jsonl";
const PRODUCTS: &str = "corpus/products.jsonl";
const TASKS: &str = "corpus/tasks.jsonl";
const DECEPTIVE: &str = "cluster/deceptive_reviewers.txt";
const LABELED: &str = "sieve/labeled.jsonl";
const SPACE: &str = "features/space.txt";
const VECTORS: &str = "features/vectors.svm";
const MODEL: &str = "model/model.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Protocol {
    Indomain,
    Cross,
    Curve,
    Reviewer,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Indomain, Protocol::Cross, Protocol::Curve, Protocol::Reviewer];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Indomain => "indomain",
            Protocol::Cross => "cross",
            Protocol::Curve => "curve",
            Protocol::Reviewer => "reviewer",
        }
    }
}

fn jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn ingest(cfg: &Loaded) -> Result<()> {
    let mut run = StageRun::new(cfg, "ingest");
    let p = &cfg.raw.paths;
    let reviews = run.config_input(&p.reviews)?;
    let products = run.config_input(&p.products)?;
    let tasks = run.config_input(&p.tasks)?;
    let snap = Snapshot::load(&reviews, &products, &tasks)?;
    for r in &snap.reviews {
        for (i, s) in r.sentences.iter().enumerate() {
            parse_bracketed(s).with_context(|| format!("review {} sentence {}", r.review_id, i + 1))?;
        }
    }
    run.write(REVIEWS, &jsonl(&snap.reviews)?)?;
    run.write(PRODUCTS, &jsonl(snap.products.values())?)?;
    let task_records = snap
        .tasks
        .root_products
        .iter()
        .map(|p| serde_json::json!({ "product_id": p }));
    run.write(TASKS, &jsonl(task_records)?)?;
    run.finish()?;
    eprintln!(
        "ingest: {} reviews, {} reviewers, {} products, {} root-task products",
        snap.reviews.len(),
        snap.reviewers.len(),
        snap.products.len(),
        snap.tasks.root_products.len()
    );
    Ok(())
}

fn render_params(p: &MrfParams) -> String {
    let mut out = String::new();
    for (name, w) in revspam::graph::BEHAVIOR_NAMES.iter().zip(p.weights) {
        let _ = writeln!(out, "w.{name}\t{w}");
    }
    let _ = writeln!(out, "bias\t{}", p.bias);
    let _ = writeln!(out, "lambda\t{}", p.lambda);
    let _ = writeln!(out, "mu\t{}", p.mu);
    out
}

pub fn cluster(cfg: &Loaded) -> Result<()> {
    let mut run = StageRun::new(cfg, "cluster");
    let reviews = load_reviews(&run.artifact("cluster", "ingested reviews", REVIEWS, "ingest")?)?;
    let tasks = load_tasks(&run.artifact("cluster", "ingested tasks", TASKS, "ingest")?)?;
    let seeds = load_seeds(&run.config_input(&cfg.raw.paths.seeds)?)?;
    let known: BTreeSet<&ReviewerId> = reviews.iter().map(|r| &r.reviewer_id).collect();
    let unknown: Vec<&str> = seeds.keys().filter(|s| !known.contains(s)).map(|s| s.0.as_str()).collect();
    if !unknown.is_empty() {
        bail!("cluster: seed reviewers not in the corpus: {}", unknown.join(", "));
    }
    let graph = build_graph(&reviews, &tasks, &seeds);
    let em = em_cluster(&graph, &MrfParams::default(), cfg.raw.cluster.max_iter, &MStepConfig::default())?;
    let deceptive = graph.deceptive_reviewers(&em.assignment);
    let list: String = deceptive.iter().map(|r| format!("{r}\n")).collect();
    run.write(DECEPTIVE, &list)?;
    run.write("cluster/assignment.tsv", &graph.render_assignment(&em.assignment))?;
    run.write("cluster/em_trace.csv", &em.render_trace_csv())?;
    run.write("cluster/nodes.tsv", &graph.render_nodes())?;
    run.write("cluster/edges.txt", &graph.render_edges())?;
    run.write("cluster/params.tsv", &render_params(&em.params))?;
    run.finish()?;
    eprintln!(
        "cluster: {} reviewers, {} edges, {} deceptive after {} EM iterations{}",
        graph.len(),
        graph.edges.len(),
        deceptive.len(),
        em.iterations,
        if em.converged { "" } else { " (iteration cap reached)" }
    );
    Ok(())
}

pub fn sieve(cfg: &Loaded) -> Result<()> {
    let mut run = StageRun::new(cfg, "sieve");
    let reviews = load_reviews(&run.artifact("sieve", "ingested reviews", REVIEWS, "ingest")?)?;
    let tasks = load_tasks(&run.artifact("sieve", "ingested tasks", TASKS, "ingest")?)?;
    let list = fs::read_to_string(run.artifact("sieve", "deceptive reviewer list", DECEPTIVE, "cluster")?)?;
    let flagged: BTreeSet<ReviewerId> = list
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| ReviewerId(l.trim().to_string()))
        .collect();
    let corpus = sieve_labels(&reviews, &flagged, &tasks);
    run.write(LABELED, &jsonl(&corpus.reviews)?)?;
    let stats = corpus_stats(&corpus);
    run.write("sieve/stats.txt", &stats.render_table())?;
    run.write("sieve/stats.csv", &stats.render_csv())?;
    run.finish()?;
    eprint!("{}", stats.render_table());
    Ok(())
}

fn resources(run: &mut StageRun) -> Result<Resources> {
    let cfg = run.cfg;
    let families = &cfg.features.families;
    let mut res = Resources::default();
    if families.contains(&FeatureFamily::Lexicon) {
        let rel = cfg.raw.paths.lexicon.as_ref().expect("validated");
        res.lexicon = Some(CategoryLexicon::load(&run.config_input(rel)?)?);
    }
    if families.contains(&FeatureFamily::AdPhrases) {
        let rel = cfg.raw.paths.phrases.as_ref().expect("validated");
        res.phrases = Some(AdPhraseList::load(&run.config_input(rel)?)?);
    }
    Ok(res)
}

fn labeled_inputs(run: &mut StageRun, stage: &'static str) -> Result<(LabeledCorpus, BTreeMap<revspam::ProductId, revspam::Product>)> {
    let corpus = LabeledCorpus::read_jsonl(&run.artifact(stage, "labeled corpus", LABELED, "sieve")?)?;
    let products = load_products(&run.artifact(stage, "ingested products", PRODUCTS, "ingest")?)?;
    Ok((corpus, products))
}

pub fn featurize(cfg: &Loaded) -> Result<()> {
    let mut run = StageRun::new(cfg, "featurize");
    let (corpus, products) = labeled_inputs(&mut run, "featurize")?;
    let res = resources(&mut run)?;
    let kept: Vec<_> = corpus.reviews.iter().filter(|r| r.label != SieveLabel::Excluded).collect();
    let reviews: Vec<_> = kept.iter().map(|r| &r.review).collect();
    let docs = documents(&reviews, &products)?;
    let refs: Vec<&Document> = docs.iter().collect();
    let space = FeatureSpace::build(&cfg.features, &refs, &res)?;
    let pairs: Vec<_> = docs.iter().zip(&kept).map(|(d, r)| (d, r.label.class())).collect();
    let vectors = space.assemble_all(&pairs)?;
    let manifest = space.to_manifest();
    FeatureSpace::from_manifest(&manifest).context("feature manifest does not reload")?;
    run.write(SPACE, &manifest)?;
    run.write(VECTORS, &vectors.iter().map(|v| v.to_svmlight() + "\n").collect::<String>())?;
    run.write("features/ids.txt", &kept.iter().map(|r| format!("{}\n", r.review.review_id)).collect::<String>())?;
    run.finish()?;
    eprintln!("featurize: {} vectors, {} dimensions, space {}", vectors.len(), space.dim(), space.hash());
    Ok(())
}

pub fn train(cfg: &Loaded) -> Result<()> {
    let mut run = StageRun::new(cfg, "train");
    let space = FeatureSpace::load(&run.artifact("train", "feature manifest", SPACE, "featurize")?)?;
    let text = fs::read_to_string(run.artifact("train", "feature vectors", VECTORS, "featurize")?)?;
    let data = text
        .lines()
        .enumerate()
        .map(|(i, l)| FeatureVector::from_svmlight(l).with_context(|| format!("{VECTORS}:{}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let model = train_model(&data, space.dim(), &cfg.protocol_config().train_config())?;
    let text = model.to_text(&space)?;
    MaxentModel::from_text(&text, &space).context("model does not reload")?;
    run.write(MODEL, &text)?;
    run.finish()?;
    eprintln!(
        "train: {} examples, {} iterations, objective {:.6}, gradient norm {:.2e}",
        data.len(),
        model.iterations,
        model.objective,
        model.grad_norm
    );
    Ok(())
}

pub fn eval(cfg: &Loaded, protocol: Protocol) -> Result<()> {
    let stage = match protocol {
        Protocol::Indomain => "eval-indomain",
        Protocol::Cross => "eval-cross",
        Protocol::Curve => "eval-curve",
        Protocol::Reviewer => "eval-reviewer",
    };
    let reviewers = match protocol {
        Protocol::Reviewer => Some(cfg.reviewer_lists()?),
        _ => None,
    };
    let mut run = StageRun::new(cfg, stage);
    let (corpus, products) = labeled_inputs(&mut run, stage)?;
    let res = resources(&mut run)?;
    let ev = Evaluator::new(&corpus, &products, res, cfg.protocol_config())?;
    let pr = &cfg.raw.protocol;
    let report: EvalReport = match protocol {
        Protocol::Indomain => ev.indomain_all(&revspam::Domain::BROAD, pr.k)?,
        Protocol::Cross => ev.cross_domain(pr.augment)?,
        Protocol::Curve => {
            let domain = domain_from_name(&pr.curve_domain).expect("validated");
            ev.learning_curve(domain, &pr.curve_fractions)?
        }
        Protocol::Reviewer => {
            let (train_ids, test_ids) = reviewers.expect("reviewer lists");
            ev.reviewer_transfer(&train_ids, &test_ids)?
        }
    };
    let dir = format!("eval/{}", protocol.name());
    let table = report.render_table();
    run.write(&format!("{dir}/report.txt"), &table)?;
    run.write(&format!("{dir}/report.csv"), &report.render_csv())?;
    run.write(&format!("{dir}/report.json"), &(report.to_json() + "\n"))?;
    if protocol == Protocol::Curve {
        run.write(&format!("{dir}/curve.csv"), &report.render_curve_csv())?;
    }
    run.finish()?;
    print!("{table}");
    Ok(())
}

pub fn report(cfg: &Loaded) -> Result<()> {
    let mut run = StageRun::new(cfg, "report");
    let mut out = String::new();
    for p in Protocol::ALL {
        let rel = format!("eval/{}/report.json", p.name());
        if !run.out_path(&rel).is_file() {
            continue;
        }
        let path = run.artifact("report", "evaluation report", &rel, "eval")?;
        let report: EvalReport = serde_json::from_str(&fs::read_to_string(&path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        let _ = writeln!(out, "== {} ==", p.name());
        out.push_str(&report.render_table());
        out.push('\n');
    }
    if out.is_empty() {
        return Err(crate::manifest::MissingArtifact {
            stage: "report",
            what: "evaluation reports",
            path: run.out_path("eval"),
            producer: "eval",
        }
        .into());
    }
    run.write("report.txt", &out)?;
    run.finish()?;
    print!("{out}");
    Ok(())
}

/// Per-review complexity counts and ratios as CSV on stdout.
pub fn complexity(cfg: &Loaded) -> Result<()> {
    let mut run = StageRun::new(cfg, "complexity");
    let reviews = load_reviews(&run.artifact("complexity", "ingested reviews", REVIEWS, "ingest")?)?;
    let mut out = format!("review_id,{},{}\n", COUNT_NAMES.join(","), RATIO_NAMES.join(","));
    for r in &reviews {
        let trees = r
            .sentences
            .iter()
            .map(|s| parse_bracketed(s))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let v = complexity_profile(&trees);
        let counts: Vec<String> = v.counts.as_array().iter().map(|c| c.to_string()).collect();
        let ratios: Vec<String> = v.ratios.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{},{},{}", r.review_id, counts.join(","), ratios.join(","));
    }
    print!("{out}");
    Ok(())
}
