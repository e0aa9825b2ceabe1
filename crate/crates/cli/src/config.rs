use std::fmt;
use std::path::{Path, PathBuf};

use revspam::features::FeatureConfig;
use revspam::{Domain, FeatureFamily, ProtocolConfig, ReviewerId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Experiment definition read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Output directory, relative to the config file.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub paths: Paths,
    #[serde(default)]
    pub features: Features,
    #[serde(default)]
    pub classifier: Classifier,
    #[serde(default)]
    pub cluster: Cluster,
    #[serde(default)]
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub reviews: PathBuf,
    pub products: PathBuf,
    pub tasks: PathBuf,
    pub seeds: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub phrases: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Features {
    pub families: String,
    pub min_df: usize,
}

impl Default for Features {
    fn default() -> Self {
        Features {
            families: "up+pos+ad+comp".into(),
            min_df: revspam::features::DEFAULT_MIN_DF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Classifier {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub threshold: f64,
}

impl Default for Classifier {
    fn default() -> Self {
        let t = revspam::TrainConfig::default();
        Classifier {
            c: t.c,
            tol: t.tol,
            max_iter: t.max_iter,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cluster {
    pub max_iter: usize,
}

impl Default for Cluster {
    fn default() -> Self {
        Cluster { max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub ratio: usize,
    pub k: usize,
    pub augment: bool,
    pub curve_domain: String,
    pub curve_fractions: Vec<f64>,
    pub train_reviewers: Vec<String>,
    pub test_reviewers: Vec<String>,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            ratio: 3,
            k: 5,
            augment: false,
            curve_domain: "Books".into(),
            curve_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            train_reviewers: Vec::new(),
            test_reviewers: Vec::new(),
        }
    }
}

/// Every problem found in a config, reported together.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem{}):", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// A validated config with paths resolved against the config file's directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub raw: RunConfig,
    pub base: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub features: FeatureConfig,
}

pub fn domain_from_name(name: &str) -> Option<Domain> {
    Domain::ALL.into_iter().find(|d| d.name().eq_ignore_ascii_case(name))
}

impl Loaded {
    pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut raw: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigErrors(vec![format!("{}: {}", path.display(), e.message())]))?;
        if seed.is_some() {
            raw.seed = seed;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = match out {
            Some(o) => o.to_path_buf(),
            None => base.join(raw.out.clone().unwrap_or_else(|| PathBuf::from("out"))),
        };
        let mut errors = Vec::new();
        let features = match FeatureConfig::parse(&raw.features.families) {
            Ok(f) => Some(f.with_min_df(raw.features.min_df)),
            Err(e) => {
                errors.push(format!("features.families: {e}"));
                None
            }
        };
        if raw.seed.is_none() {
            errors.push("seed: missing (set `seed` in the config or pass --seed)".into());
        }
        let p = &raw.paths;
        for (key, rel) in [
            ("paths.reviews", &p.reviews),
            ("paths.products", &p.products),
            ("paths.tasks", &p.tasks),
            ("paths.seeds", &p.seeds),
        ] {
            if !base.join(rel).is_file() {
                errors.push(format!("{key}: {} does not exist", rel.display()));
            }
        }
        if let Some(f) = &features {
            for (family, key, rel) in [
                (FeatureFamily::Lexicon, "paths.lexicon", &p.lexicon),
                (FeatureFamily::AdPhrases, "paths.phrases", &p.phrases),
            ] {
                match rel {
                    Some(rel) if !base.join(rel).is_file() => {
                        errors.push(format!("{key}: {} does not exist", rel.display()))
                    }
                    None if f.families.contains(&family) => {
                        errors.push(format!("{key}: required by the {} family", family.name()))
                    }
                    _ => {}
                }
            }
        }
        let c = &raw.classifier;
        if !(c.c > 0.0) {
            errors.push(format!("classifier.c: {} must be positive", c.c));
        }
        if !(c.tol > 0.0) {
            errors.push(format!("classifier.tol: {} must be positive", c.tol));
        }
        if c.max_iter == 0 {
            errors.push("classifier.max_iter: must be at least 1".into());
        }
        if !(c.threshold > 0.0 && c.threshold < 1.0) {
            errors.push(format!("classifier.threshold: {} must lie in (0, 1)", c.threshold));
        }
        if raw.cluster.max_iter == 0 {
            errors.push("cluster.max_iter: must be at least 1".into());
        }
        let pr = &raw.protocol;
        if pr.ratio == 0 {
            errors.push("protocol.ratio: must be at least 1".into());
        }
        if pr.k < 2 {
            errors.push(format!("protocol.k: {} must be at least 2", pr.k));
        }
        if domain_from_name(&pr.curve_domain).is_none_or(|d| d == Domain::Other) {
            errors.push(format!("protocol.curve_domain: {} is not a broad domain", pr.curve_domain));
        }
        if pr.curve_fractions.is_empty() {
            errors.push("protocol.curve_fractions: must not be empty".into());
        }
        for f in &pr.curve_fractions {
            if !(0.0..=1.0).contains(f) {
                errors.push(format!("protocol.curve_fractions: {f} outside [0, 1]"));
            }
        }
        match (features, raw.seed, errors.is_empty()) {
            (Some(features), Some(seed), true) => Ok(Loaded {
                raw,
                base,
                seed,
                out,
                features,
            }),
            _ => Err(ConfigErrors(errors)),
        }
    }

    pub fn input(&self, rel: &Path) -> PathBuf {
        self.base.join(rel)
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let c = &self.raw.classifier;
        ProtocolConfig {
            features: self.features.clone(),
            c: c.c,
            tol: c.tol,
            max_iter: c.max_iter,
            ratio: self.raw.protocol.ratio,
            threshold: c.threshold,
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical JSON form of the experiment definition. The
    /// output directory is not part of it.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn canonical_json(&self) -> String {
        let mut raw = self.raw.clone();
        raw.seed = Some(self.seed);
        serde_json::to_string(&raw).expect("config serializes")
    }

    pub fn reviewer_lists(&self) -> Result<(Vec<ReviewerId>, Vec<ReviewerId>), ConfigErrors> {
        let pr = &self.raw.protocol;
        let mut errors = Vec::new();
        if pr.train_reviewers.is_empty() {
            errors.push("protocol.train_reviewers: must not be empty for the reviewer protocol".into());
        }
        if pr.test_reviewers.is_empty() {
            errors.push("protocol.test_reviewers: must not be empty for the reviewer protocol".into());
        }
        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        let ids = |v: &[String]| v.iter().map(|s| ReviewerId(s.clone())).collect();
        Ok((ids(&pr.train_reviewers), ids(&pr.test_reviewers)))
    }
}
