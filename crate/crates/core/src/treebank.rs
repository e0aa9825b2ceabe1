//! Penn-Treebank style bracketed trees.
//!
//! Trees are read from the single-line bracketed form produced by common
//! constituency parsers, e.g. `(ROOT (S (NP (DT the) (NN dog)) (VP (VBZ barks))))`.
//! At read time the tree is normalized:
//!
//! * an outer `ROOT`/`TOP` or unlabeled wrapper around a single constituent is removed,
//! * functional suffixes are cut from labels (`NP-SBJ-1` becomes `NP`), except for
//!   the bracket and empty-element tags `-LRB-`, `-RRB-`, `-NONE-`,
//! * `-NONE-` empty elements are dropped together with any constituent left empty.
//!
//! Rendering always produces the canonical single-space form, so
//! `parse_bracketed(&t.render())` gives back `t` for every tree the parser returns.

use std::fmt;

use thiserror::Error;

/// Labeled ordered tree over one sentence.
///
/// A `Node` always has at least one child. A `Leaf` carries a terminal word and
/// only ever appears as the single child of a preterminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParseTree {
    Node { label: String, children: Vec<ParseTree> },
    Leaf(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("unbalanced at offset {0}")]
    Unbalanced(usize),
    #[error("empty node at offset {0}")]
    EmptyNode(usize),
    #[error("bare top-level token at offset {0}")]
    BareToken(usize),
    #[error("node without children at offset {0}")]
    NoChildren(usize),
    #[error("terminal must be the only child of its node at offset {0}")]
    MixedChildren(usize),
    #[error("unexpected trailing input at offset {0}")]
    Trailing(usize),
    #[error("tree is empty after removing empty elements")]
    EmptyTree,
}

impl TreeError {
    pub fn offset(&self) -> Option<usize> {
        match *self {
            TreeError::Unbalanced(o)
            | TreeError::EmptyNode(o)
            | TreeError::BareToken(o)
            | TreeError::NoChildren(o)
            | TreeError::MixedChildren(o)
            | TreeError::Trailing(o) => Some(o),
            TreeError::EmptyTree => None,
        }
    }
}

/// Right-hand side of a production: child labels, or the word under a preterminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rhs {
    Labels(Vec<String>),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductionRule {
    pub lhs: String,
    pub rhs: Rhs,
}

impl ProductionRule {
    pub fn is_lexical(&self) -> bool {
        matches!(self.rhs, Rhs::Word(_))
    }
}

impl fmt::Display for ProductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        match &self.rhs {
            Rhs::Labels(labels) => {
                for l in labels {
                    write!(f, " {}", l)?;
                }
                Ok(())
            }
            Rhs::Word(w) => write!(f, " {}", w),
        }
    }
}

const KEEP_DASHED: [&str; 3] = ["-LRB-", "-RRB-", "-NONE-"];

fn bare_label(raw: &str) -> String {
    if KEEP_DASHED.contains(&raw) || (raw.len() > 1 && raw.starts_with('-') && raw.ends_with('-')) {
        return raw.to_string();
    }
    match raw.find('-') {
        Some(i) if i > 0 => raw[..i].to_string(),
        _ => raw.to_string(),
    }
}

struct Reader<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn atom(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b == b'(' || b == b')' || b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        // Atoms end on ASCII delimiters, so the slice is always on a char boundary.
        std::str::from_utf8(&self.src[start..self.pos]).expect("utf-8 input")
    }

    /// Reads one node; the cursor is on its opening parenthesis.
    fn node(&mut self) -> Result<RawNode, TreeError> {
        let open = self.pos;
        self.pos += 1;
        self.skip_ws();
        let label = match self.peek() {
            None => return Err(TreeError::Unbalanced(self.src.len())),
            Some(b')') => return Err(TreeError::EmptyNode(open)),
            Some(b'(') => String::new(),
            Some(_) => self.atom().to_string(),
        };
        let mut children = Vec::new();
        let mut leaves = 0usize;
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(TreeError::Unbalanced(self.src.len())),
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b'(') => children.push(self.node()?),
                Some(_) => {
                    let at = self.pos;
                    let word = self.atom().to_string();
                    leaves += 1;
                    children.push(RawNode::Leaf(word, at));
                }
            }
        }
        if children.is_empty() {
            return Err(TreeError::NoChildren(open));
        }
        if leaves > 0 && children.len() > 1 {
            let at = children
                .iter()
                .find_map(|c| match c {
                    RawNode::Leaf(_, at) => Some(*at),
                    _ => None,
                })
                .unwrap_or(open);
            return Err(TreeError::MixedChildren(at));
        }
        Ok(RawNode::Node(label, children))
    }
}

enum RawNode {
    Node(String, Vec<RawNode>),
    Leaf(String, usize),
}

fn normalize(raw: RawNode) -> Option<ParseTree> {
    match raw {
        RawNode::Leaf(word, _) => Some(ParseTree::Leaf(word)),
        RawNode::Node(label, children) => {
            let label = bare_label(&label);
            if label == "-NONE-" {
                return None;
            }
            let children: Vec<ParseTree> = children.into_iter().filter_map(normalize).collect();
            if children.is_empty() {
                None
            } else {
                Some(ParseTree::Node { label, children })
            }
        }
    }
}

/// Parses a single bracketed tree.
pub fn parse_bracketed(text: &str) -> Result<ParseTree, TreeError> {
    let mut r = Reader {
        src: text.as_bytes(),
        pos: 0,
    };
    r.skip_ws();
    match r.peek() {
        None => return Err(TreeError::Unbalanced(0)),
        Some(b'(') => {}
        Some(b')') => return Err(TreeError::Unbalanced(r.pos)),
        Some(_) => return Err(TreeError::BareToken(r.pos)),
    }
    let raw = r.node()?;
    r.skip_ws();
    if let Some(b) = r.peek() {
        return Err(if b == b')' {
            TreeError::Unbalanced(r.pos)
        } else {
            TreeError::Trailing(r.pos)
        });
    }
    let mut tree = normalize(raw).ok_or(TreeError::EmptyTree)?;
    loop {
        match tree {
            ParseTree::Node { ref label, ref mut children }
                if (label.is_empty() || label == "ROOT" || label == "TOP")
                    && children.len() == 1
                    && matches!(children[0], ParseTree::Node { .. }) =>
            {
                tree = children.pop().expect("one child");
            }
            _ => break,
        }
    }
    if let ParseTree::Node { label, .. } = &tree {
        if label.is_empty() {
            return Err(TreeError::EmptyNode(0));
        }
    }
    Ok(tree)
}

/// Canonical single-space bracketed rendering.
pub fn render_bracketed(tree: &ParseTree) -> String {
    let mut out = String::new();
    tree.render_into(&mut out);
    out
}

impl ParseTree {
    pub fn label(&self) -> &str {
        match self {
            ParseTree::Node { label, .. } => label,
            ParseTree::Leaf(word) => word,
        }
    }

    pub fn children(&self) -> &[ParseTree] {
        match self {
            ParseTree::Node { children, .. } => children,
            ParseTree::Leaf(_) => &[],
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf(_))
    }

    /// A node whose single child is a leaf.
    pub fn is_preterminal(&self) -> bool {
        matches!(self, ParseTree::Node { children, .. } if children.len() == 1 && children[0].is_leaf())
    }

    pub fn render(&self) -> String {
        render_bracketed(self)
    }

    fn render_into(&self, out: &mut String) {
        match self {
            ParseTree::Leaf(word) => out.push_str(word),
            ParseTree::Node { label, children } => {
                out.push('(');
                out.push_str(label);
                for c in children {
                    out.push(' ');
                    c.render_into(out);
                }
                out.push(')');
            }
        }
    }

    /// Pre-order iterator over all nodes, leaves included.
    pub fn nodes(&self) -> Nodes<'_> {
        Nodes { stack: vec![self] }
    }

    pub fn node_count(&self) -> usize {
        self.nodes().count()
    }

    pub fn internal_node_count(&self) -> usize {
        self.nodes().filter(|n| !n.is_leaf()).count()
    }

    pub fn preterminal_count(&self) -> usize {
        self.nodes().filter(|n| n.is_preterminal()).count()
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.nodes()
            .filter_map(|n| match n {
                ParseTree::Leaf(w) => Some(w.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Preterminal labels in left-to-right token order.
    pub fn pos_tags(&self) -> Vec<&str> {
        self.nodes()
            .filter(|n| n.is_preterminal())
            .map(|n| n.label())
            .collect()
    }

    /// One rule per internal node, in pre-order. With `lexicalized == false`
    /// the preterminal -> word rules are left out.
    pub fn production_rules(&self, lexicalized: bool) -> Vec<ProductionRule> {
        let mut rules = Vec::new();
        for n in self.nodes() {
            if let ParseTree::Node { label, children } = n {
                let rhs = if n.is_preterminal() {
                    if !lexicalized {
                        continue;
                    }
                    Rhs::Word(children[0].label().to_string())
                } else {
                    Rhs::Labels(children.iter().map(|c| c.label().to_string()).collect())
                };
                rules.push(ProductionRule {
                    lhs: label.clone(),
                    rhs,
                });
            }
        }
        rules
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl std::str::FromStr for ParseTree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bracketed(s)
    }
}

pub struct Nodes<'a> {
    stack: Vec<&'a ParseTree>,
}

impl<'a> Iterator for Nodes<'a> {
    type Item = &'a ParseTree;

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.stack.pop()?;
        self.stack.extend(n.children().iter().rev());
        Some(n)
    }
}

pub fn pos_tags(tree: &ParseTree) -> Vec<&str> {
    tree.pos_tags()
}

pub fn production_rules(tree: &ParseTree, lexicalized: bool) -> Vec<ProductionRule> {
    tree.production_rules(lexicalized)
}

/// Collapses runs of whitespace to single spaces and removes spaces adjacent to
/// parentheses on the inside, matching the canonical rendering.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.trim().chars() {
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && ch != ')' && !out.ends_with('(') && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        if ch == '(' && !out.is_empty() && !out.ends_with('(') && !out.ends_with(' ') {
            out.push(' ');
        }
        out.push(ch);
    }
    out
}
