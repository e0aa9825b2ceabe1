//! Tree-pattern queries and the syntactic complexity profile.
//!
//! The pattern language is a small subset of the usual constituency-tree query
//! syntax:
//!
//! ```text
//! pattern  := head relation*
//! head     := names | "(" pattern ")"
//! names    := NAME ("|" NAME)*          // "__" matches any node
//! relation := ("<" | "<<" | "!<" | "!<<") (names | "(" pattern ")")
//! ```
//!
//! `A < B` holds when some child of `A` matches `B`; `A << B` when some proper
//! descendant does. Several relations after one head are all required.
//! Leaves are nodes too: their label is the word.

use std::fmt;
use std::ops::Add;

use thiserror::Error;

use crate::treebank::ParseTree;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown relation operator '{operator}' at position {position}")]
    UnknownOperator { position: usize, operator: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum LabelMatch {
    Any,
    OneOf(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RelationKind {
    Child,
    Descendant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Relation {
    kind: RelationKind,
    negated: bool,
    target: PatternNode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PatternNode {
    labels: LabelMatch,
    relations: Vec<Relation>,
}

/// A compiled, immutable tree pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreePattern {
    source: String,
    root: PatternNode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Pipe,
    Op(String),
    Name(String),
}

fn lex(text: &str) -> Vec<(usize, Tok)> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                toks.push((i, Tok::Open));
            }
            ')' => {
                chars.next();
                toks.push((i, Tok::Close));
            }
            '|' => {
                chars.next();
                toks.push((i, Tok::Pipe));
            }
            '<' | '>' | '!' => {
                let mut op = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    let is_op_char = matches!(c, '<' | '>' | '!' | '-' | '+' | ',' | ':' | '=' | '#' | '`' | '~')
                        || c.is_ascii_digit();
                    if !is_op_char {
                        break;
                    }
                    op.push(c);
                    chars.next();
                }
                toks.push((i, Tok::Op(op)));
            }
            _ => {
                let mut name = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '|' | '<' | '>' | '!') {
                        break;
                    }
                    name.push(c);
                    chars.next();
                }
                toks.push((i, Tok::Name(name)));
            }
        }
    }
    toks
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, PatternError> {
        Err(PatternError::Syntax {
            position: self.position(),
            message: message.into(),
        })
    }

    fn pattern(&mut self) -> Result<PatternNode, PatternError> {
        let mut node = self.head()?;
        loop {
            let at = self.position();
            let (kind, negated) = match self.peek() {
                None | Some(Tok::Close) => break,
                Some(Tok::Op(op)) => match op.as_str() {
                    "<" => (RelationKind::Child, false),
                    "<<" => (RelationKind::Descendant, false),
                    "!<" => (RelationKind::Child, true),
                    "!<<" => (RelationKind::Descendant, true),
                    other => {
                        return Err(PatternError::UnknownOperator {
                            position: at,
                            operator: other.to_string(),
                        })
                    }
                },
                Some(Tok::Name(name)) if !name.chars().any(|c| c.is_alphanumeric() || c == '_') => {
                    return Err(PatternError::UnknownOperator {
                        position: at,
                        operator: name.clone(),
                    })
                }
                Some(Tok::Name(name)) => {
                    let msg = format!("expected a relation operator, found '{}'", name);
                    return self.syntax(msg);
                }
                Some(Tok::Open) => return self.syntax("expected a relation operator, found '('"),
                Some(Tok::Pipe) => return self.syntax("unexpected '|'"),
            };
            self.pos += 1;
            let target = self.target()?;
            node.relations.push(Relation {
                kind,
                negated,
                target,
            });
        }
        Ok(node)
    }

    fn head(&mut self) -> Result<PatternNode, PatternError> {
        match self.peek() {
            Some(Tok::Open) => self.group(),
            Some(Tok::Name(_)) => self.names(),
            Some(_) => self.syntax("expected a node name or '('"),
            None => self.syntax("unexpected end of pattern"),
        }
    }

    fn target(&mut self) -> Result<PatternNode, PatternError> {
        match self.peek() {
            Some(Tok::Open) => self.group(),
            Some(Tok::Name(_)) => self.names(),
            Some(_) => self.syntax("expected a node name or '(' after relation"),
            None => self.syntax("unexpected end of pattern after relation"),
        }
    }

    fn group(&mut self) -> Result<PatternNode, PatternError> {
        self.pos += 1;
        let inner = self.pattern()?;
        match self.peek() {
            Some(Tok::Close) => {
                self.pos += 1;
                Ok(inner)
            }
            _ => self.syntax("expected ')'"),
        }
    }

    fn names(&mut self) -> Result<PatternNode, PatternError> {
        let mut names = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Name(n)) => {
                    names.push(n.clone());
                    self.pos += 1;
                }
                _ => return self.syntax("expected a node name"),
            }
            if self.peek() == Some(&Tok::Pipe) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let labels = if names.iter().any(|n| n == "__") {
            LabelMatch::Any
        } else {
            LabelMatch::OneOf(names)
        };
        Ok(PatternNode {
            labels,
            relations: Vec::new(),
        })
    }
}

pub fn compile_pattern(text: &str) -> Result<TreePattern, PatternError> {
    let mut p = Parser {
        toks: lex(text),
        pos: 0,
        end: text.len(),
    };
    let root = p.pattern()?;
    if p.peek().is_some() {
        return p.syntax("unexpected ')'");
    }
    Ok(TreePattern {
        source: text.to_string(),
        root,
    })
}

impl std::str::FromStr for TreePattern {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        compile_pattern(s)
    }
}

impl fmt::Display for TreePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl PatternNode {
    fn matches(&self, node: &ParseTree) -> bool {
        let label_ok = match &self.labels {
            LabelMatch::Any => true,
            LabelMatch::OneOf(names) => names.iter().any(|n| n == node.label()),
        };
        label_ok && self.relations.iter().all(|r| r.holds(node))
    }
}

impl Relation {
    fn holds(&self, node: &ParseTree) -> bool {
        let found = match self.kind {
            RelationKind::Child => node.children().iter().any(|c| self.target.matches(c)),
            RelationKind::Descendant => node
                .children()
                .iter()
                .any(|c| c.nodes().any(|d| self.target.matches(d))),
        };
        found != self.negated
    }
}

impl TreePattern {
    pub fn matches(&self, node: &ParseTree) -> bool {
        self.root.matches(node)
    }

    /// Number of nodes of `tree` at which the pattern matches.
    pub fn match_count(&self, tree: &ParseTree) -> usize {
        tree.nodes().filter(|n| self.matches(n)).count()
    }
}

pub fn match_count(tree: &ParseTree, pattern: &TreePattern) -> usize {
    pattern.match_count(tree)
}

/// Pattern equivalent of the clause definition used by [`complexity_profile`].
pub const CLAUSE_PATTERN: &str = "S|SINV|SQ|SBARQ < VP";
pub const COORDINATE_PHRASE_PATTERN: &str = "NP|VP|ADJP|ADVP < CC";
pub const VERB_PHRASE_PATTERN: &str = "VP";

const CLAUSE_LABELS: [&str; 4] = ["S", "SINV", "SQ", "SBARQ"];
const COORDINATED_LABELS: [&str; 4] = ["NP", "VP", "ADJP", "ADVP"];

/// Preterminal tags whose tokens are not counted as words.
pub const PUNCTUATION_TAGS: [&str; 9] = [".", ",", ":", "''", "``", "-LRB-", "-RRB-", "#", "$"];

pub fn is_punctuation_tag(tag: &str) -> bool {
    PUNCTUATION_TAGS.contains(&tag)
}

pub const RATIO_NAMES: [&str; 10] = [
    "MLS", "MLC", "C_per_S", "C_per_T", "DC_per_C", "DC_per_T", "CP_per_C", "CP_per_T", "VP_per_T",
    "T_per_S",
];

pub const COUNT_NAMES: [&str; 7] = ["W", "S", "C", "DC", "T", "CP", "VP"];

/// Raw counts behind the complexity ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComplexityCounts {
    pub words: u64,
    pub sentences: u64,
    pub clauses: u64,
    pub dependent_clauses: u64,
    pub t_units: u64,
    pub coordinate_phrases: u64,
    pub verb_phrases: u64,
}

impl Add for ComplexityCounts {
    type Output = ComplexityCounts;

    fn add(self, o: Self) -> Self {
        ComplexityCounts {
            words: self.words + o.words,
            sentences: self.sentences + o.sentences,
            clauses: self.clauses + o.clauses,
            dependent_clauses: self.dependent_clauses + o.dependent_clauses,
            t_units: self.t_units + o.t_units,
            coordinate_phrases: self.coordinate_phrases + o.coordinate_phrases,
            verb_phrases: self.verb_phrases + o.verb_phrases,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ComplexityCounts {
    pub fn as_array(&self) -> [u64; 7] {
        [
            self.words,
            self.sentences,
            self.clauses,
            self.dependent_clauses,
            self.t_units,
            self.coordinate_phrases,
            self.verb_phrases,
        ]
    }
}

/// Seven counts plus the ten derived ratios, in [`RATIO_NAMES`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexityVector {
    pub counts: ComplexityCounts,
    pub ratios: [f64; 10],
}

impl From<ComplexityCounts> for ComplexityVector {
    fn from(c: ComplexityCounts) -> Self {
        let ratios = [
            ratio(c.words, c.sentences),
            ratio(c.words, c.clauses),
            ratio(c.clauses, c.sentences),
            ratio(c.clauses, c.t_units),
            ratio(c.dependent_clauses, c.clauses),
            ratio(c.dependent_clauses, c.t_units),
            ratio(c.coordinate_phrases, c.clauses),
            ratio(c.coordinate_phrases, c.t_units),
            ratio(c.verb_phrases, c.t_units),
            ratio(c.t_units, c.sentences),
        ];
        ComplexityVector { counts: c, ratios }
    }
}

impl ComplexityVector {
    pub fn ratio(&self, name: &str) -> Option<f64> {
        RATIO_NAMES.iter().position(|n| *n == name).map(|i| self.ratios[i])
    }

    pub fn csv_header() -> String {
        COUNT_NAMES
            .iter()
            .chain(RATIO_NAMES.iter())
            .copied()
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        let counts = self.counts.as_array().into_iter().map(|c| c.to_string());
        let ratios = self.ratios.iter().map(|r| r.to_string());
        counts.chain(ratios).collect::<Vec<_>>().join(",")
    }
}

fn is_clause(node: &ParseTree) -> bool {
    CLAUSE_LABELS.contains(&node.label())
        && node.children().iter().any(|c| !c.is_leaf() && c.label() == "VP")
}

fn count_tree(
    node: &ParseTree,
    parent: Option<&str>,
    under_clause: bool,
    acc: &mut ComplexityCounts,
) {
    if node.is_leaf() {
        return;
    }
    if node.is_preterminal() {
        if !is_punctuation_tag(node.label()) {
            acc.words += 1;
        }
        return;
    }
    let clause = is_clause(node);
    if clause {
        acc.clauses += 1;
        if parent == Some("SBAR") {
            acc.dependent_clauses += 1;
        }
        if !under_clause {
            acc.t_units += 1;
        }
    }
    if COORDINATED_LABELS.contains(&node.label())
        && node.children().iter().any(|c| !c.is_leaf() && c.label() == "CC")
    {
        acc.coordinate_phrases += 1;
    }
    if node.label() == "VP" {
        acc.verb_phrases += 1;
    }
    for c in node.children() {
        count_tree(c, Some(node.label()), under_clause || clause, acc);
    }
}

pub fn complexity_counts(trees: &[ParseTree]) -> ComplexityCounts {
    let mut acc = ComplexityCounts::default();
    for t in trees {
        acc.sentences += 1;
        count_tree(t, None, false, &mut acc);
    }
    acc
}

/// Complexity profile of one review's sentence trees. An empty list gives
/// the all-zero vector.
pub fn complexity_profile(trees: &[ParseTree]) -> ComplexityVector {
    complexity_counts(trees).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_bracketed;

    fn tree(s: &str) -> ParseTree {
        parse_bracketed(s).unwrap()
    }

    const DOG: &str = "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))";

    #[test]
    fn simple_patterns() {
        let t = tree(DOG);
        assert_eq!(compile_pattern("VP").unwrap().match_count(&t), 1);
        assert_eq!(compile_pattern("S < VP").unwrap().match_count(&t), 1);
        assert_eq!(compile_pattern("__").unwrap().match_count(&t), t.node_count());
        assert_eq!(compile_pattern("NP << (CC)").unwrap().match_count(&t), 0);
        assert_eq!(compile_pattern("NP|VP").unwrap().match_count(&t), 2);
        assert_eq!(compile_pattern("S << DT").unwrap().match_count(&t), 1);
        assert_eq!(compile_pattern("S < DT").unwrap().match_count(&t), 0);
        assert_eq!(compile_pattern("NP !< CC").unwrap().match_count(&t), 1);
        assert_eq!(compile_pattern("__ !<< __").unwrap().match_count(&t), 3);
        assert_eq!(compile_pattern("dog").unwrap().match_count(&t), 1);
    }

    #[test]
    fn conjunction_and_nesting() {
        let t = tree("(S (NP (NP (NN a)) (CC and) (NP (NN b))) (VP (VBD ran)))");
        let p = compile_pattern("S < NP < VP").unwrap();
        assert_eq!(p.match_count(&t), 1);
        let p = compile_pattern("S < (NP < CC)").unwrap();
        assert_eq!(p.match_count(&t), 1);
        let p = compile_pattern("S < (NP !< CC)").unwrap();
        assert_eq!(p.match_count(&t), 0);
        let p = compile_pattern("(NP < CC) < NP").unwrap();
        assert_eq!(p.match_count(&t), 1);
    }

    #[test]
    fn pattern_errors() {
        assert!(matches!(
            compile_pattern("NP > VP"),
            Err(PatternError::UnknownOperator { position: 3, .. })
        ));
        assert!(matches!(
            compile_pattern("NP $ VP"),
            Err(PatternError::UnknownOperator { .. })
        ));
        assert!(matches!(compile_pattern("NP <"), Err(PatternError::Syntax { position: 4, .. })));
        assert!(matches!(compile_pattern("(NP < VP"), Err(PatternError::Syntax { .. })));
        assert!(matches!(compile_pattern("NP)"), Err(PatternError::Syntax { .. })));
        assert!(matches!(compile_pattern(""), Err(PatternError::Syntax { .. })));
        assert!(matches!(compile_pattern("NP VP"), Err(PatternError::Syntax { .. })));
        assert!(matches!(compile_pattern("NP|"), Err(PatternError::Syntax { .. })));
    }

    #[test]
    fn profile_of_example_sentence() {
        let v = complexity_profile(&[tree(DOG)]);
        let c = v.counts;
        assert_eq!(
            (c.words, c.sentences, c.clauses, c.t_units, c.verb_phrases, c.dependent_clauses, c.coordinate_phrases),
            (3, 1, 1, 1, 1, 0, 0)
        );
        assert_eq!(v.ratio("MLS"), Some(3.0));
        assert_eq!(v.ratio("C_per_S"), Some(1.0));
    }

    #[test]
    fn empty_profile_is_zero() {
        let v = complexity_profile(&[]);
        assert_eq!(v.counts, ComplexityCounts::default());
        assert!(v.ratios.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn dependent_clause_and_punctuation() {
        let t = tree(
            "(S (NP (PRP I)) (VP (VBD knew) (SBAR (IN that) (S (NP (PRP it)) (VP (VBD worked))))) (. .))",
        );
        let c = complexity_counts(&[t]);
        assert_eq!(c.words, 5);
        assert_eq!(c.clauses, 2);
        assert_eq!(c.dependent_clauses, 1);
        assert_eq!(c.t_units, 1);
        assert_eq!(c.verb_phrases, 2);
    }
}
