//! Four complementary code-similarity measures and their weighted combination.
//!
//! * text: LCS ratio over all significant token texts;
//! * keyword: the same ratio restricted to keywords and operators;
//! * tree: symmetric overlap of height-bounded anonymized subtrees;
//! * dataflow: Jaccard overlap of def-use edges.
//!
//! Every ratio is generic over [`Score`]; the pipeline uses `f64`, the
//! property tests also run on exact rationals.

pub mod dataflow;
pub mod lcs;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{dedent, parse_module, tokenize, TokenKind};
use crate::score::Score;

pub use dataflow::{dataflow_similarity, DataFlowGraph, FlowNode};
pub use lcs::lcs_len;
pub use tree::{bag_similarity, tree_similarity, StructTree, SubtreeBag};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("weights must be non-negative and sum to 1, got {0:?}")]
    InvalidWeights([f64; 4]),
    #[error("subtree height must be at least 1")]
    InvalidHeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Identifier,
    Keyword,
    Literal,
    Operator,
    Delimiter,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    pub tokens: Vec<(TokenClass, String)>,
}

impl TokenStream {
    pub fn from_source(src: &str) -> TokenStream {
        let tokens = tokenize(src)
            .significant()
            .map(|t| {
                let class = match t.kind {
                    TokenKind::Identifier => TokenClass::Identifier,
                    TokenKind::Keyword => TokenClass::Keyword,
                    TokenKind::Literal => TokenClass::Literal,
                    TokenKind::Operator => TokenClass::Operator,
                    _ => TokenClass::Delimiter,
                };
                (class, t.text.clone())
            })
            .collect();
        TokenStream { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|(_, t)| t.as_str()).collect()
    }

    pub fn keyword_texts(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .filter(|(c, _)| matches!(c, TokenClass::Keyword | TokenClass::Operator))
            .map(|(_, t)| t.as_str())
            .collect()
    }
}

/// `2·LCS / (|a| + |b|)`; two empty sequences are identical.
pub fn lcs_ratio<S: Score>(a: &[&str], b: &[&str]) -> S {
    if a.is_empty() && b.is_empty() {
        return S::one();
    }
    S::ratio(2 * lcs_len(a, b) as u64, (a.len() + b.len()) as u64)
}

pub fn text_similarity<S: Score>(a: &TokenStream, b: &TokenStream) -> S {
    lcs_ratio(&a.texts(), &b.texts())
}

pub fn keyword_similarity<S: Score>(a: &TokenStream, b: &TokenStream) -> S {
    lcs_ratio(&a.keyword_texts(), &b.keyword_texts())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<S> {
    pub text: S,
    pub keyword: S,
    pub tree: S,
    pub dataflow: S,
}

impl<S: Score> Default for Weights<S> {
    fn default() -> Self {
        let q = S::ratio(1, 4);
        Weights { text: q, keyword: q, tree: q, dataflow: q }
    }
}

impl<S: Score> Weights<S> {
    pub fn new(text: S, keyword: S, tree: S, dataflow: S) -> Result<Self, SimilarityError> {
        let w = Weights { text, keyword, tree, dataflow };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        let parts = [self.text, self.keyword, self.tree, self.dataflow];
        let sum = parts.iter().fold(S::zero(), |acc, &w| acc + w);
        let nonneg = parts.iter().all(|&w| w >= S::zero());
        if nonneg && (sum.as_f64() - 1.0).abs() <= 1e-9 {
            Ok(())
        } else {
            Err(SimilarityError::InvalidWeights(parts.map(Score::as_f64)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector<S> {
    pub text: S,
    pub keyword: S,
    pub tree: S,
    pub dataflow: S,
    pub combined: S,
    /// Tree and dataflow came from the delimiter fallback on either side.
    pub degraded: bool,
}

impl<S: Score> SimilarityVector<S> {
    /// Component scores with `combined` not yet populated.
    pub fn partial(text: S, keyword: S, tree: S, dataflow: S) -> Self {
        SimilarityVector { text, keyword, tree, dataflow, combined: S::zero(), degraded: false }
    }
}

/// Populate `combined = Σ wᵢ·componentᵢ`.
pub fn combine<S: Score>(v: SimilarityVector<S>, w: &Weights<S>) -> Result<SimilarityVector<S>, SimilarityError> {
    w.validate()?;
    let combined = w.text * v.text + w.keyword * v.keyword + w.tree * v.tree + w.dataflow * v.dataflow;
    Ok(SimilarityVector { combined: combined.clamp_unit(), ..v })
}

/// Structure of a code fragment: its tree and data-flow graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Structure {
    pub tree: StructTree,
    pub dataflow: DataFlowGraph,
}

/// Source of structural representations. `None` means the provider cannot
/// handle the fragment and the caller should fall back.
pub trait StructureProvider: Send + Sync {
    fn name(&self) -> &'static str;
    fn analyze(&self, src: &str) -> Option<Structure>;
}

/// Full parser for the subject language.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParserProvider;

impl StructureProvider for ParserProvider {
    fn name(&self) -> &'static str {
        "parser"
    }

    fn analyze(&self, src: &str) -> Option<Structure> {
        let module = parse_module(src).ok()?;
        Some(Structure { tree: StructTree::from_module(&module), dataflow: DataFlowGraph::from_module(&module) })
    }
}

/// Nesting-by-delimiter approximation; accepts any input.
#[derive(Debug, Clone, Copy, Default)]
pub struct DelimiterProvider;

impl StructureProvider for DelimiterProvider {
    fn name(&self) -> &'static str {
        "delimiter"
    }

    fn analyze(&self, src: &str) -> Option<Structure> {
        let lexed = tokenize(src);
        Some(Structure { tree: StructTree::from_tokens(&lexed), dataflow: DataFlowGraph::from_tokens(&lexed) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    pub weights: Weights<f64>,
    pub subtree_height: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig { weights: Weights::default(), subtree_height: 3 }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if self.subtree_height == 0 {
            return Err(SimilarityError::InvalidHeight);
        }
        self.weights.validate()
    }
}

/// Precomputed representations of one code fragment, so a fragment
/// compared against many others is analyzed once.
#[derive(Debug, Clone)]
pub struct CodeProfile {
    pub tokens: TokenStream,
    pub tree: StructTree,
    pub subtrees: SubtreeBag,
    pub dataflow: DataFlowGraph,
    pub degraded: bool,
}

impl CodeProfile {
    pub fn new(src: &str, subtree_height: usize) -> CodeProfile {
        Self::with_providers(src, subtree_height, &ParserProvider, &DelimiterProvider)
    }

    pub fn with_providers(
        src: &str,
        subtree_height: usize,
        primary: &dyn StructureProvider,
        fallback: &dyn StructureProvider,
    ) -> CodeProfile {
        let src = dedent(src);
        let (structure, degraded) = match primary.analyze(&src) {
            Some(s) => (s, false),
            None => (fallback.analyze(&src).unwrap_or_default(), true),
        };
        CodeProfile {
            tokens: TokenStream::from_source(&src),
            subtrees: structure.tree.subtree_bag(subtree_height),
            tree: structure.tree,
            dataflow: structure.dataflow,
            degraded,
        }
    }

    /// Component scores against `other`, combined with `weights`.
    pub fn compare<S: Score>(&self, other: &CodeProfile, weights: &Weights<S>) -> Result<SimilarityVector<S>, SimilarityError> {
        let mut v = SimilarityVector::partial(
            text_similarity(&self.tokens, &other.tokens),
            keyword_similarity(&self.tokens, &other.tokens),
            bag_similarity(&self.subtrees, &other.subtrees),
            dataflow_similarity(&self.dataflow, &other.dataflow),
        );
        v.degraded = self.degraded || other.degraded;
        combine(v, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn stream(words: &[&str]) -> TokenStream {
        TokenStream { tokens: words.iter().map(|w| (TokenClass::Identifier, w.to_string())).collect() }
    }

    #[test]
    fn text_ratio_examples() {
        let a = stream(&["a", "b", "c", "d"]);
        let b = stream(&["a", "b", "x", "d"]);
        assert_eq!(text_similarity::<Rational64>(&a, &b), Rational64::new(3, 4));
        assert_eq!(text_similarity::<f64>(&a, &stream(&["p", "q"])), 0.0);
        assert_eq!(text_similarity::<f64>(&stream(&[]), &stream(&[])), 1.0);
    }

    #[test]
    fn keyword_ignores_identifiers() {
        let a = TokenStream::from_source("for i in range(n):\n    if i > k:\n        total += i\n");
        let b = TokenStream::from_source("for j in range(m):\n    if j > lim:\n        acc += j\n");
        assert_eq!(keyword_similarity::<f64>(&a, &b), 1.0);
        assert!(text_similarity::<f64>(&a, &b) < 1.0);
    }

    #[test]
    fn equals_is_a_delimiter_not_an_operator() {
        let s = TokenStream::from_source("x = a + b\ny += 1\n");
        assert_eq!(s.keyword_texts(), ["+"]);
    }

    #[test]
    fn combine_examples() {
        let d = Weights::<Rational64>::default();
        let one = Rational64::from_integer(1);
        let zero = Rational64::from_integer(0);
        let v = combine(SimilarityVector::partial(one, zero, zero, zero), &d).unwrap();
        assert_eq!(v.combined, Rational64::new(1, 4));

        let r = |n| Rational64::new(n, 10);
        let w = Weights::new(r(1), r(2), r(4), r(3)).unwrap();
        let v = combine(SimilarityVector::partial(r(8), r(6), r(10), r(4)), &w).unwrap();
        assert_eq!(v.combined, Rational64::new(72, 100));
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(Weights::new(0.5, 0.5, 0.5, -0.5).is_err());
        assert!(Weights::new(0.3, 0.3, 0.3, 0.3).is_err());
    }

    #[test]
    fn unparseable_code_is_degraded() {
        let good = CodeProfile::new("def f(a):\n    return a\n", 3);
        let bad = CodeProfile::new("def f(a):\n    return a +\n", 3);
        assert!(!good.degraded);
        assert!(bad.degraded);
        let v = good.compare::<f64>(&bad, &Weights::default()).unwrap();
        assert!(v.degraded);
        assert!(v.combined > 0.0 && v.combined < 1.0);
    }

    #[test]
    fn indented_snippet_is_dedented() {
        let a = CodeProfile::new("    def f(a):\n        return a\n", 3);
        assert!(!a.degraded);
    }
}
