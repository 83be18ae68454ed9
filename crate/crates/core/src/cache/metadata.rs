//! Use-condition metadata rendered as subject-language comments.
//!
//! ```text
//! # sherlock:metadata begin
//! # scope: <what the page solves>
//! # input-types: <parameters of the page's functions>
//! # approach: <constructs the code relies on>
//! # intended-problem: <the page's own problem statement>
//! # use-conditions: <first line>
//! # | <further lines, verbatim>
//! # sherlock:metadata end
//! ```

use serde::{Deserialize, Serialize};

use crate::debugging::AlignmentVerdict;
use crate::lang::{top_level_functions, SubjectLanguage};

pub const METADATA_BEGIN: &str = "sherlock:metadata begin";
pub const METADATA_END: &str = "sherlock:metadata end";
const CONTINUATION: &str = "| ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataBlock {
    pub scope: String,
    pub input_types: String,
    pub approach: String,
    pub intended_problem: String,
    /// Verbatim from the alignment verdict.
    pub use_conditions: String,
}

const KEYS: [&str; 5] = ["scope", "input-types", "approach", "intended-problem", "use-conditions"];

impl MetadataBlock {
    pub fn describe(title: &str, alignment: &AlignmentVerdict, code: &str) -> MetadataBlock {
        let scope = if alignment.page_summary.trim().is_empty() { &alignment.rationale } else { &alignment.page_summary };
        MetadataBlock {
            scope: scope.trim().to_string(),
            input_types: input_types(code),
            approach: approach(code),
            intended_problem: title.trim().to_string(),
            use_conditions: alignment.use_conditions.clone(),
        }
    }

    fn fields(&self) -> [&str; 5] {
        [&self.scope, &self.input_types, &self.approach, &self.intended_problem, &self.use_conditions]
    }

    /// Comment lines, each prefixed by `indent` and ending in a newline.
    pub fn render(&self, language: SubjectLanguage, indent: &str) -> String {
        let c = language.line_comment();
        let mut out = format!("{indent}{c} {METADATA_BEGIN}\n");
        for (key, value) in KEYS.iter().zip(self.fields()) {
            let mut lines = value.split('\n');
            out += &format!("{indent}{c} {key}: {}\n", lines.next().unwrap_or_default());
            for line in lines {
                out += &format!("{indent}{c} {CONTINUATION}{line}\n");
            }
        }
        out += &format!("{indent}{c} {METADATA_END}\n");
        out
    }
}

fn comment(line: &str) -> Option<&str> {
    line.strip_prefix('#').map(|r| r.strip_prefix(' ').unwrap_or(r))
}

/// The metadata block heading a snippet's code, if any.
pub fn parse_metadata(code: &str) -> Option<MetadataBlock> {
    let mut lines = code.lines().map(str::trim_start).skip_while(|l| l.is_empty());
    if comment(lines.next()?)? != METADATA_BEGIN {
        return None;
    }
    let mut values: Vec<(usize, String)> = Vec::new();
    for line in lines {
        let body = comment(line)?;
        if body == METADATA_END {
            let get = |i: usize| values.iter().find(|(k, _)| *k == i).map(|(_, v)| v.clone()).unwrap_or_default();
            return Some(MetadataBlock {
                scope: get(0),
                input_types: get(1),
                approach: get(2),
                intended_problem: get(3),
                use_conditions: get(4),
            });
        }
        if let Some(rest) = body.strip_prefix(CONTINUATION).or_else(|| (body == "|").then_some("")) {
            let (_, v) = values.last_mut()?;
            v.push('\n');
            v.push_str(rest);
        } else {
            let (key, value) = body.split_once(": ").or_else(|| body.strip_suffix(':').map(|k| (k, "")))?;
            values.push((KEYS.iter().position(|k| *k == key)?, value.to_string()));
        }
    }
    None
}

fn input_types(code: &str) -> String {
    let sigs: Vec<String> = top_level_functions(code)
        .into_iter()
        .map(|f| {
            let extra = if f.variadic { " plus variadic" } else { "" };
            format!("{} takes {} positional ({} required){extra}", f.name, f.positional, f.required)
        })
        .collect();
    if sigs.is_empty() {
        "not stated by the page".into()
    } else {
        sigs.join("; ")
    }
}

fn approach(code: &str) -> String {
    let has = |needle: &str| code.contains(needle);
    let mut parts = Vec::new();
    if has("for ") || has("while ") {
        parts.push("iteration");
    }
    if has("sorted(") || has(".sort(") {
        parts.push("sorting");
    }
    if has("heapq") {
        parts.push("heap selection");
    }
    if has("dict(") || has("set(") || has("Counter(") || has("{") {
        parts.push("hashing");
    }
    if top_level_functions(code).iter().any(|f| code.matches(&format!("{}(", f.name)).count() > 1) {
        parts.push("recursion");
    }
    if parts.is_empty() {
        "direct computation".into()
    } else {
        parts.join(", ")
    }
}
