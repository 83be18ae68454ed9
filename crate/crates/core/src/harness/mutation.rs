//! Semantic mutation operators used to plant implementation errors.

use serde::{Deserialize, Serialize};

use crate::lang::lexer::{tokenize, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    /// `<` and `>`, `<=` and `>=`, `==` and `!=` swap.
    FlipComparison,
    /// An integer literal `n` becomes `n + 1`.
    OffByOne,
    /// The condition of an `if` or `elif` statement becomes `True`.
    DropCondition,
}

impl MutationKind {
    pub const ALL: [MutationKind; 3] = [MutationKind::FlipComparison, MutationKind::OffByOne, MutationKind::DropCondition];
}

/// One applicable edit: replace `range` of the source with `replacement`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationSite {
    pub kind: MutationKind,
    pub range: (usize, usize),
    pub replacement: String,
}

impl MutationSite {
    pub fn apply(&self, src: &str) -> String {
        format!("{}{}{}", &src[..self.range.0], self.replacement, &src[self.range.1..])
    }
}

/// Every site of the enabled kinds, in source order.
pub fn mutation_sites(src: &str, kinds: &[MutationKind]) -> Vec<MutationSite> {
    let tokens = tokenize(src).tokens;
    let mut sites = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if kinds.contains(&MutationKind::FlipComparison) && t.kind == TokenKind::Operator {
            let flipped = match t.text.as_str() {
                "<" => Some(">"),
                ">" => Some("<"),
                "<=" => Some(">="),
                ">=" => Some("<="),
                "==" => Some("!="),
                "!=" => Some("=="),
                _ => None,
            };
            if let Some(f) = flipped {
                sites.push(MutationSite { kind: MutationKind::FlipComparison, range: (t.start, t.end), replacement: f.into() });
            }
        }
        if kinds.contains(&MutationKind::OffByOne) && t.kind == TokenKind::Literal {
            if let Ok(n) = t.text.parse::<u64>() {
                sites.push(MutationSite {
                    kind: MutationKind::OffByOne,
                    range: (t.start, t.end),
                    replacement: (n + 1).to_string(),
                });
            }
        }
        let statement_start = i == 0
            || matches!(tokens[i - 1].kind, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent);
        if kinds.contains(&MutationKind::DropCondition)
            && t.kind == TokenKind::Keyword
            && (t.text == "if" || t.text == "elif")
            && statement_start
        {
            let mut depth = 0i32;
            let colon = tokens[i + 1..].iter().find(|u| {
                match u.text.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    _ => {}
                }
                depth == 0 && u.text == ":" || u.kind == TokenKind::Newline
            });
            if let Some(c) = colon.filter(|c| c.text == ":") {
                sites.push(MutationSite { kind: MutationKind::DropCondition, range: (t.end, c.start), replacement: " True".into() });
            }
        }
    }
    sites
}
