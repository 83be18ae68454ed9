//! Subject-language front end (Python): tokenizer, parser and the small
//! source rewrites the pipeline needs.

pub mod ast;
pub mod lexer;
pub mod parser;

use serde::{Deserialize, Serialize};

use ast::{ParamKind, Stmt};
pub use lexer::{tokenize, Lexed, Token, TokenKind};
pub use parser::{parse_module, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SubjectLanguage {
    #[default]
    Python,
}

impl SubjectLanguage {
    pub fn line_comment(self) -> &'static str {
        match self {
            SubjectLanguage::Python => "#",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SubjectLanguage::Python => "python",
        }
    }
}

impl std::str::FromStr for SubjectLanguage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "python3" | "py" => Ok(SubjectLanguage::Python),
            other => Err(format!("unsupported subject language {other:?}")),
        }
    }
}

/// Remove the common leading whitespace of all non-blank lines and drop
/// interactive-prompt prefixes (`>>> `, `... `).
pub fn dedent(src: &str) -> String {
    let lines: Vec<&str> = src
        .lines()
        .map(|l| {
            l.strip_prefix(">>> ")
                .or_else(|| l.strip_prefix("... "))
                .or_else(|| if l == ">>>" || l == "..." { Some("") } else { None })
                .unwrap_or(l)
        })
        .collect();
    let indent = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start_matches([' ', '\t']).len())
        .min()
        .unwrap_or(0);
    let mut out = String::with_capacity(src.len());
    for l in lines {
        if l.trim().is_empty() {
            out.push('\n');
        } else {
            out.push_str(&l[indent..]);
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSig {
    pub name: String,
    /// Positional parameters without defaults.
    pub required: usize,
    /// All plain parameters (with or without defaults).
    pub positional: usize,
    pub variadic: bool,
}

impl FunctionSig {
    pub fn accepts(&self, arity: usize) -> bool {
        arity >= self.required && (self.variadic || arity <= self.positional)
    }
}

/// Top-level `def`s of `src`, in source order. Uses the parser when possible
/// and a token scan for column-0 `def NAME(` otherwise.
pub fn top_level_functions(src: &str) -> Vec<FunctionSig> {
    if let Ok(module) = parse_module(src) {
        return module
            .body
            .iter()
            .filter_map(|s| match s {
                Stmt::FunctionDef { name, params, .. } => Some(FunctionSig {
                    name: name.clone(),
                    required: params
                        .iter()
                        .filter(|p| p.kind == ParamKind::Normal && p.default.is_none())
                        .count(),
                    positional: params.iter().filter(|p| p.kind == ParamKind::Normal).count(),
                    variadic: params.iter().any(|p| p.kind == ParamKind::VarArgs),
                }),
                _ => None,
            })
            .collect();
    }
    let lexed = tokenize(src);
    let toks: Vec<&Token> = lexed.tokens.iter().filter(|t| t.kind != TokenKind::Comment).collect();
    let mut out = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        let at_col0 = t.start == 0 || src.as_bytes().get(t.start - 1) == Some(&b'\n');
        if t.kind == TokenKind::Keyword && t.text == "def" && at_col0 {
            if let (Some(name), Some(open)) = (toks.get(i + 1), toks.get(i + 2)) {
                if name.kind == TokenKind::Identifier && open.text == "(" {
                    let mut depth = 0usize;
                    let mut commas = 0usize;
                    let mut any = false;
                    for t in &toks[i + 3..] {
                        match t.text.as_str() {
                            "(" | "[" | "{" => depth += 1,
                            ")" if depth == 0 => break,
                            ")" | "]" | "}" => depth = depth.saturating_sub(1),
                            "," if depth == 0 => commas += 1,
                            _ => any = true,
                        }
                    }
                    let n = if any { commas + 1 } else { 0 };
                    out.push(FunctionSig {
                        name: name.text.clone(),
                        required: n,
                        positional: n,
                        variadic: false,
                    });
                }
            }
        }
    }
    out
}

/// Rename every identifier token equal to `from` into `to`; strings and
/// comments are untouched.
pub fn rename_identifier(src: &str, from: &str, to: &str) -> String {
    if from == to {
        return src.to_string();
    }
    let lexed = tokenize(src);
    let mut out = String::with_capacity(src.len());
    let mut last = 0;
    for t in lexed.tokens.iter().filter(|t| t.kind == TokenKind::Identifier && t.text == from) {
        out.push_str(&src[last..t.start]);
        out.push_str(to);
        last = t.end;
    }
    out.push_str(&src[last..]);
    out
}

/// Pick the top-level function that most plausibly implements an entry point
/// called with `arity` arguments: an exact name match, else the last function
/// accepting that arity, else the last function.
pub fn choose_entry_function(src: &str, entry: &str, arity: Option<usize>) -> Option<FunctionSig> {
    let funcs = top_level_functions(src);
    if let Some(f) = funcs.iter().find(|f| f.name == entry) {
        return Some(f.clone());
    }
    if let Some(n) = arity {
        if let Some(f) = funcs.iter().rev().find(|f| f.accepts(n)) {
            return Some(f.clone());
        }
    }
    funcs.last().cloned()
}

/// Append an alias so the snippet's function is callable as `entry`. Returns
/// the source unchanged when it already defines `entry` or defines nothing.
pub fn rebind_entry_point(src: &str, entry: &str, arity: Option<usize>) -> String {
    match choose_entry_function(src, entry, arity) {
        Some(f) if f.name != entry => {
            let mut out = src.trim_end().to_string();
            out.push_str(&format!("\n\n{entry} = {}\n", f.name));
            out
        }
        _ => src.to_string(),
    }
}

/// Name of the called function and argument count in a call expression such
/// as `add(1, 2)`.
pub fn call_target(expr: &str) -> Option<(String, usize)> {
    let module = parse_module(expr.trim()).ok()?;
    match module.body.as_slice() {
        [Stmt::Expr(ast::Expr::Call { func, args })] => match func.as_ref() {
            ast::Expr::Name(n) => Some((n.clone(), args.len())),
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedent_strips_common_margin_and_prompts() {
        assert_eq!(dedent("    a = 1\n      b = 2\n"), "a = 1\n  b = 2\n");
        assert_eq!(dedent(">>> x = 1\n>>> print(x)\n"), "x = 1\nprint(x)\n");
    }

    #[test]
    fn finds_top_level_functions() {
        let src = "def helper(a):\n    return a\n\ndef main(xs, k=1, *rest):\n    def inner():\n        pass\n    return helper(xs)\n";
        let fs = top_level_functions(src);
        assert_eq!(fs.len(), 2);
        assert_eq!(fs[1], FunctionSig { name: "main".into(), required: 1, positional: 2, variadic: true });
    }

    #[test]
    fn token_scan_fallback_for_broken_code() {
        let fs = top_level_functions("def broken(a, b):\n    return a +\n");
        assert_eq!(fs[0].name, "broken");
        assert_eq!(fs[0].required, 2);
    }

    #[test]
    fn rename_skips_strings_and_comments() {
        let src = "def f(n):\n    # f calls f\n    return f(n - 1) if n else 'f'\n";
        let out = rename_identifier(src, "f", "g");
        assert_eq!(out, "def g(n):\n    # f calls f\n    return g(n - 1) if n else 'f'\n");
    }

    #[test]
    fn rebind_appends_alias() {
        let src = "def top_k(a, b, n):\n    return []\n";
        let out = rebind_entry_point(src, "large_product", Some(3));
        assert!(out.ends_with("\n\nlarge_product = top_k\n"));
        assert_eq!(rebind_entry_point(src, "top_k", Some(3)), src);
    }

    #[test]
    fn rebind_prefers_matching_arity() {
        let src = "def main(a, b):\n    return helper(a)\n\ndef helper(a):\n    return a\n";
        let out = rebind_entry_point(src, "solve", Some(2));
        assert!(out.ends_with("solve = main\n"));
    }

    #[test]
    fn call_target_parses_test_inputs() {
        assert_eq!(call_target("add(1, [2, 3])"), Some(("add".into(), 2)));
        assert_eq!(call_target("1 + 2"), None);
    }
}
