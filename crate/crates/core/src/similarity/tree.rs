//! Anonymized structural trees and their height-bounded subtree bags.

use std::collections::HashSet;

use crate::lang::ast::{Arg, Comprehension, DictItem, Expr, Module, Param, ParamKind, Stmt};
use crate::lang::{Lexed, TokenKind};
use crate::score::Score;

/// Rooted ordered tree; node 0 is the root when non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructTree {
    labels: Vec<String>,
    children: Vec<Vec<usize>>,
}

impl StructTree {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    fn push(&mut self, parent: Option<usize>, label: impl Into<String>) -> usize {
        let id = self.labels.len();
        self.labels.push(label.into());
        self.children.push(Vec::new());
        if let Some(p) = parent {
            self.children[p].push(id);
        }
        id
    }

    /// Canonical serialization of the subtree at `node`, cut `height` levels
    /// deep. Labels are length-prefixed so any label text is unambiguous.
    pub fn serialize(&self, node: usize, height: usize) -> String {
        let mut out = String::new();
        self.write_node(node, height, &mut out);
        out
    }

    fn write_node(&self, node: usize, height: usize, out: &mut String) {
        let label = &self.labels[node];
        out.push_str(&label.len().to_string());
        out.push(':');
        out.push_str(label);
        let kids = &self.children[node];
        if height > 1 && !kids.is_empty() {
            out.push('(');
            for (i, &k) in kids.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_node(k, height - 1, out);
            }
            out.push(')');
        }
    }

    pub fn subtree_bag(&self, height: usize) -> SubtreeBag {
        let items: Vec<String> = (0..self.len()).map(|n| self.serialize(n, height.max(1))).collect();
        let set = items.iter().cloned().collect();
        SubtreeBag { items, set }
    }

    /// Tree of a parsed module. Empty modules give an empty tree.
    pub fn from_module(module: &Module) -> StructTree {
        let mut t = StructTree::default();
        if module.body.is_empty() {
            return t;
        }
        let root = t.push(None, "Module");
        for s in &module.body {
            t.stmt(root, s);
        }
        t
    }

    /// Nesting-by-delimiter tree for code the parser rejects: logical lines
    /// under indentation blocks, bracket groups nested inside lines.
    pub fn from_tokens(lexed: &Lexed) -> StructTree {
        let mut t = StructTree::default();
        if lexed.significant().next().is_none() {
            return t;
        }
        let root = t.push(None, "Module");
        let mut blocks = vec![root];
        let mut line: Option<usize> = None;
        let mut last_line: Option<usize> = None;
        let mut groups: Vec<usize> = Vec::new();
        for tok in &lexed.tokens {
            match tok.kind {
                TokenKind::Newline => {
                    if line.is_some() {
                        last_line = line.take();
                    }
                    groups.clear();
                }
                TokenKind::Indent => {
                    let parent = last_line.unwrap_or(*blocks.last().unwrap());
                    let block = t.push(Some(parent), "Block");
                    blocks.push(block);
                    last_line = None;
                }
                TokenKind::Dedent => {
                    if blocks.len() > 1 {
                        blocks.pop();
                    }
                    last_line = None;
                }
                TokenKind::Comment | TokenKind::EndMarker => {}
                kind => {
                    let cur_line = *line.get_or_insert_with(|| t.push(Some(*blocks.last().unwrap()), "Line"));
                    let container = groups.last().copied().unwrap_or(cur_line);
                    match tok.text.as_str() {
                        "(" | "[" | "{" if kind == TokenKind::Delimiter => {
                            let g = t.push(Some(container), format!("Group:{}", tok.text));
                            groups.push(g);
                        }
                        ")" | "]" | "}" if kind == TokenKind::Delimiter => {
                            groups.pop();
                        }
                        text => {
                            let label = match kind {
                                TokenKind::Identifier => "Id".to_string(),
                                TokenKind::Literal => literal_label(text).to_string(),
                                TokenKind::Keyword => format!("Kw:{text}"),
                                TokenKind::Operator => format!("Op:{text}"),
                                _ => format!("Delim:{text}"),
                            };
                            t.push(Some(container), label);
                        }
                    }
                }
            }
        }
        t
    }

    fn stmts(&mut self, parent: usize, body: &[Stmt]) {
        for s in body {
            self.stmt(parent, s);
        }
    }

    fn else_block(&mut self, parent: usize, label: &str, body: &[Stmt]) {
        if !body.is_empty() {
            let n = self.push(Some(parent), label);
            self.stmts(n, body);
        }
    }

    fn params(&mut self, parent: usize, params: &[Param]) {
        let n = self.push(Some(parent), "Arguments");
        for p in params {
            let label = match p.kind {
                ParamKind::Normal => "Param",
                ParamKind::VarArgs => "VarArgs",
                ParamKind::KwArgs => "KwArgs",
            };
            let pn = self.push(Some(n), label);
            if let Some(a) = &p.annotation {
                self.expr(pn, a);
            }
            if let Some(d) = &p.default {
                self.expr(pn, d);
            }
        }
    }

    fn stmt(&mut self, parent: usize, s: &Stmt) {
        match s {
            Stmt::FunctionDef { params, returns, body, decorators, is_async, .. } => {
                let n = self.push(Some(parent), if *is_async { "AsyncFunctionDef" } else { "FunctionDef" });
                for d in decorators {
                    let dn = self.push(Some(n), "Decorator");
                    self.expr(dn, d);
                }
                self.params(n, params);
                if let Some(r) = returns {
                    self.expr(n, r);
                }
                self.stmts(n, body);
            }
            Stmt::ClassDef { bases, body, decorators, .. } => {
                let n = self.push(Some(parent), "ClassDef");
                for d in decorators {
                    let dn = self.push(Some(n), "Decorator");
                    self.expr(dn, d);
                }
                for b in bases {
                    self.arg(n, b);
                }
                self.stmts(n, body);
            }
            Stmt::Return(e) => {
                let n = self.push(Some(parent), "Return");
                if let Some(e) = e {
                    self.expr(n, e);
                }
            }
            Stmt::Delete(targets) => {
                let n = self.push(Some(parent), "Delete");
                self.exprs(n, targets);
            }
            Stmt::Assign { targets, value } => {
                let n = self.push(Some(parent), "Assign");
                self.exprs(n, targets);
                self.expr(n, value);
            }
            Stmt::AugAssign { target, op, value } => {
                let n = self.push(Some(parent), format!("AugAssign:{op:?}"));
                self.expr(n, target);
                self.expr(n, value);
            }
            Stmt::AnnAssign { target, annotation, value } => {
                let n = self.push(Some(parent), "AnnAssign");
                self.expr(n, target);
                self.expr(n, annotation);
                if let Some(v) = value {
                    self.expr(n, v);
                }
            }
            Stmt::For { target, iter, body, orelse, is_async } => {
                let n = self.push(Some(parent), if *is_async { "AsyncFor" } else { "For" });
                self.expr(n, target);
                self.expr(n, iter);
                self.stmts(n, body);
                self.else_block(n, "Else", orelse);
            }
            Stmt::While { test, body, orelse } => {
                let n = self.push(Some(parent), "While");
                self.expr(n, test);
                self.stmts(n, body);
                self.else_block(n, "Else", orelse);
            }
            Stmt::If { test, body, orelse } => {
                let n = self.push(Some(parent), "If");
                self.expr(n, test);
                self.stmts(n, body);
                self.else_block(n, "Else", orelse);
            }
            Stmt::With { items, body, is_async } => {
                let n = self.push(Some(parent), if *is_async { "AsyncWith" } else { "With" });
                for it in items {
                    let wn = self.push(Some(n), "WithItem");
                    self.expr(wn, &it.context);
                    if let Some(t) = &it.target {
                        self.expr(wn, t);
                    }
                }
                self.stmts(n, body);
            }
            Stmt::Raise { exc, cause } => {
                let n = self.push(Some(parent), "Raise");
                for e in [exc, cause].into_iter().flatten() {
                    self.expr(n, e);
                }
            }
            Stmt::Try { body, handlers, orelse, finalbody } => {
                let n = self.push(Some(parent), "Try");
                self.stmts(n, body);
                for h in handlers {
                    let hn = self.push(Some(n), "Handler");
                    if let Some(t) = &h.typ {
                        self.expr(hn, t);
                    }
                    self.stmts(hn, &h.body);
                }
                self.else_block(n, "Else", orelse);
                self.else_block(n, "Finally", finalbody);
            }
            Stmt::Assert { test, msg } => {
                let n = self.push(Some(parent), "Assert");
                self.expr(n, test);
                if let Some(m) = msg {
                    self.expr(n, m);
                }
            }
            Stmt::Import(names) => {
                let n = self.push(Some(parent), "Import");
                for _ in names {
                    self.push(Some(n), "Alias");
                }
            }
            Stmt::ImportFrom { names, .. } => {
                let n = self.push(Some(parent), "ImportFrom");
                for _ in names {
                    self.push(Some(n), "Alias");
                }
            }
            Stmt::Global(names) | Stmt::Nonlocal(names) => {
                let label = if matches!(s, Stmt::Global(_)) { "Global" } else { "Nonlocal" };
                let n = self.push(Some(parent), label);
                for _ in names {
                    self.push(Some(n), "Id");
                }
            }
            Stmt::Expr(e) => {
                let n = self.push(Some(parent), "Expr");
                self.expr(n, e);
            }
            Stmt::Pass => {
                self.push(Some(parent), "Pass");
            }
            Stmt::Break => {
                self.push(Some(parent), "Break");
            }
            Stmt::Continue => {
                self.push(Some(parent), "Continue");
            }
        }
    }

    fn exprs(&mut self, parent: usize, es: &[Expr]) {
        for e in es {
            self.expr(parent, e);
        }
    }

    fn arg(&mut self, parent: usize, a: &Arg) {
        match a {
            Arg::Positional(e) => self.expr(parent, e),
            Arg::Keyword(_, e) => {
                let n = self.push(Some(parent), "Keyword");
                self.expr(n, e);
            }
            Arg::Star(e) => {
                let n = self.push(Some(parent), "Starred");
                self.expr(n, e);
            }
            Arg::DoubleStar(e) => {
                let n = self.push(Some(parent), "DoubleStarred");
                self.expr(n, e);
            }
        }
    }

    fn generators(&mut self, parent: usize, gens: &[Comprehension]) {
        for g in gens {
            let n = self.push(Some(parent), if g.is_async { "AsyncComprehension" } else { "Comprehension" });
            self.expr(n, &g.target);
            self.expr(n, &g.iter);
            self.exprs(n, &g.ifs);
        }
    }

    fn expr(&mut self, parent: usize, e: &Expr) {
        match e {
            Expr::BoolOp { op, values } => {
                let n = self.push(Some(parent), format!("BoolOp:{op:?}"));
                self.exprs(n, values);
            }
            Expr::NamedExpr { target, value } => {
                let n = self.push(Some(parent), "NamedExpr");
                self.expr(n, target);
                self.expr(n, value);
            }
            Expr::BinOp { left, op, right } => {
                let n = self.push(Some(parent), format!("BinOp:{op:?}"));
                self.expr(n, left);
                self.expr(n, right);
            }
            Expr::UnaryOp { op, operand } => {
                let n = self.push(Some(parent), format!("UnaryOp:{op:?}"));
                self.expr(n, operand);
            }
            Expr::Lambda { params, body } => {
                let n = self.push(Some(parent), "Lambda");
                self.params(n, params);
                self.expr(n, body);
            }
            Expr::IfExp { test, body, orelse } => {
                let n = self.push(Some(parent), "IfExp");
                self.expr(n, test);
                self.expr(n, body);
                self.expr(n, orelse);
            }
            Expr::Dict(items) => {
                let n = self.push(Some(parent), "Dict");
                for it in items {
                    match it {
                        DictItem::Pair(k, v) => {
                            let p = self.push(Some(n), "Pair");
                            self.expr(p, k);
                            self.expr(p, v);
                        }
                        DictItem::Unpack(v) => {
                            let p = self.push(Some(n), "DoubleStarred");
                            self.expr(p, v);
                        }
                    }
                }
            }
            Expr::Set(es) => {
                let n = self.push(Some(parent), "Set");
                self.exprs(n, es);
            }
            Expr::ListComp { elt, generators } | Expr::SetComp { elt, generators } | Expr::GeneratorExp { elt, generators } => {
                let label = match e {
                    Expr::ListComp { .. } => "ListComp",
                    Expr::SetComp { .. } => "SetComp",
                    _ => "GeneratorExp",
                };
                let n = self.push(Some(parent), label);
                self.expr(n, elt);
                self.generators(n, generators);
            }
            Expr::DictComp { key, value, generators } => {
                let n = self.push(Some(parent), "DictComp");
                self.expr(n, key);
                self.expr(n, value);
                self.generators(n, generators);
            }
            Expr::Await(v) => {
                let n = self.push(Some(parent), "Await");
                self.expr(n, v);
            }
            Expr::Yield(v) => {
                let n = self.push(Some(parent), "Yield");
                if let Some(v) = v {
                    self.expr(n, v);
                }
            }
            Expr::YieldFrom(v) => {
                let n = self.push(Some(parent), "YieldFrom");
                self.expr(n, v);
            }
            Expr::Compare { left, ops, comparators } => {
                let ops: Vec<String> = ops.iter().map(|o| format!("{o:?}")).collect();
                let n = self.push(Some(parent), format!("Compare:{}", ops.join("|")));
                self.expr(n, left);
                self.exprs(n, comparators);
            }
            Expr::Call { func, args } => {
                let n = self.push(Some(parent), "Call");
                self.expr(n, func);
                for a in args {
                    self.arg(n, a);
                }
            }
            Expr::Constant(kind, _) => {
                self.push(Some(parent), format!("Const:{kind:?}"));
            }
            Expr::Attribute { value, .. } => {
                let n = self.push(Some(parent), "Attribute");
                self.expr(n, value);
                self.push(Some(n), "Id");
            }
            Expr::Subscript { value, slice } => {
                let n = self.push(Some(parent), "Subscript");
                self.expr(n, value);
                self.expr(n, slice);
            }
            Expr::Starred(v) => {
                let n = self.push(Some(parent), "Starred");
                self.expr(n, v);
            }
            Expr::Name(_) => {
                self.push(Some(parent), "Id");
            }
            Expr::List(es) => {
                let n = self.push(Some(parent), "List");
                self.exprs(n, es);
            }
            Expr::Tuple(es) => {
                let n = self.push(Some(parent), "Tuple");
                self.exprs(n, es);
            }
            Expr::Slice { lower, upper, step } => {
                let flags: String = [lower, upper, step].iter().map(|p| if p.is_some() { '1' } else { '0' }).collect();
                let n = self.push(Some(parent), format!("Slice:{flags}"));
                for p in [lower, upper, step].into_iter().flatten() {
                    self.expr(n, p);
                }
            }
        }
    }
}

fn literal_label(text: &str) -> &'static str {
    match text.chars().next() {
        Some(c) if c.is_ascii_digit() || c == '.' => "Lit:Num",
        _ => "Lit:Str",
    }
}

/// Serialized height-bounded subtrees, one per node, with a lookup set.
#[derive(Debug, Clone, Default)]
pub struct SubtreeBag {
    items: Vec<String>,
    set: HashSet<String>,
}

impl SubtreeBag {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Count of this bag's items whose serialization occurs in `other`.
    fn matched_in(&self, other: &SubtreeBag) -> u64 {
        self.items.iter().filter(|s| other.set.contains(*s)).count() as u64
    }
}

/// `(match(a→b) + match(b→a)) / 2`, where `match(x→y)` is the fraction of
/// x's subtrees also present in y.
pub fn bag_similarity<S: Score>(a: &SubtreeBag, b: &SubtreeBag) -> S {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => S::one(),
        (true, false) | (false, true) => S::zero(),
        _ => {
            let two = S::from_count(2);
            (S::ratio(a.matched_in(b), a.len() as u64) + S::ratio(b.matched_in(a), b.len() as u64)) / two
        }
    }
}

pub fn tree_similarity<S: Score>(a: &StructTree, b: &StructTree, height: usize) -> S {
    bag_similarity(&a.subtree_bag(height), &b.subtree_bag(height))
}
