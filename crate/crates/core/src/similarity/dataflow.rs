//! Def-use graphs over positionally abstracted variables.
//!
//! A variable is any name bound in the snippet: parameters, assignment and
//! loop targets, comprehension and `with` targets, walrus targets, and
//! receivers of `obj.method(...)` statements (mutation counts as a def).
//! Variables are numbered by first definition, so consistent renaming
//! leaves the graph unchanged. Names never bound (builtins, imports,
//! function and class names) are not variables.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::lang::ast::{Arg, Comprehension, DictItem, Expr, Module, Param, Stmt};
use crate::lang::{Lexed, Token, TokenKind};
use crate::score::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlowNode {
    Var(u32),
    /// Sink for values leaving through `return`.
    Return,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFlowGraph {
    pub edges: BTreeSet<(FlowNode, FlowNode)>,
}

impl DataFlowGraph {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn from_module(module: &Module) -> DataFlowGraph {
        let mut numbering = Numbering::default();
        for s in &module.body {
            collect_stmt(s, &mut numbering);
        }
        let mut b = Builder { vars: numbering.ids, graph: DataFlowGraph::default() };
        for s in &module.body {
            b.stmt(s);
        }
        b.graph
    }

    /// Line-oriented approximation for unparseable code.
    pub fn from_tokens(lexed: &Lexed) -> DataFlowGraph {
        let lines = logical_lines(lexed);
        let mut numbering = Numbering::default();
        for line in &lines {
            for name in token_defs(line) {
                numbering.define(name);
            }
        }
        let vars = numbering.ids;
        let mut graph = DataFlowGraph::default();
        for line in &lines {
            let defs: Vec<FlowNode> = token_defs(line).into_iter().map(|n| FlowNode::Var(vars[n])).collect();
            let first = line[0].text.as_str();
            let (sinks, uses): (Vec<FlowNode>, Vec<&Token>) = if first == "return" {
                (vec![FlowNode::Return], line[1..].to_vec())
            } else if first == "for" {
                let in_at = line.iter().position(|t| t.text == "in").unwrap_or(line.len());
                (defs, line[in_at..].to_vec())
            } else if first == "def" {
                (Vec::new(), Vec::new())
            } else if let Some(eq) = assignment_split(line) {
                let mut uses = line[eq + 1..].to_vec();
                if line[eq].text != "=" {
                    uses.extend(&line[..eq]);
                }
                (defs, uses)
            } else if !defs.is_empty() {
                // obj.method(args)
                (defs, line[2..].to_vec())
            } else {
                (Vec::new(), Vec::new())
            };
            for (i, t) in uses.iter().enumerate() {
                let is_call = uses.get(i + 1).is_some_and(|n| n.text == "(");
                let is_attr = i > 0 && uses[i - 1].text == ".";
                if t.kind != TokenKind::Identifier || is_call || is_attr {
                    continue;
                }
                if let Some(&id) = vars.get(t.text.as_str()) {
                    for &sink in &sinks {
                        graph.edges.insert((FlowNode::Var(id), sink));
                    }
                }
            }
        }
        graph
    }
}

/// `|E_a ∩ E_b| / |E_a ∪ E_b|`; two empty graphs are identical.
pub fn dataflow_similarity<S: Score>(a: &DataFlowGraph, b: &DataFlowGraph) -> S {
    if a.is_empty() && b.is_empty() {
        return S::one();
    }
    let inter = a.edges.intersection(&b.edges).count() as u64;
    let union = (a.edges.len() + b.edges.len()) as u64 - inter;
    S::ratio(inter, union)
}

#[derive(Default)]
struct Numbering<'a> {
    ids: HashMap<&'a str, u32>,
}

impl<'a> Numbering<'a> {
    fn define(&mut self, name: &'a str) {
        let next = self.ids.len() as u32;
        self.ids.entry(name).or_insert(next);
    }
}

/// Names bound by an assignment target; subscripts and attributes bind
/// their base.
fn target_names<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
    match e {
        Expr::Name(n) => out.push(n),
        Expr::Tuple(es) | Expr::List(es) => es.iter().for_each(|e| target_names(e, out)),
        Expr::Starred(e) => target_names(e, out),
        Expr::Subscript { value, .. } | Expr::Attribute { value, .. } => target_names(value, out),
        _ => {}
    }
}

fn method_receiver(e: &Expr) -> Option<&str> {
    if let Expr::Call { func, .. } = e {
        if let Expr::Attribute { value, .. } = func.as_ref() {
            if let Expr::Name(n) = value.as_ref() {
                return Some(n);
            }
        }
    }
    None
}

fn collect_params<'a>(params: &'a [Param], n: &mut Numbering<'a>) {
    for p in params {
        n.define(&p.name);
    }
    for p in params {
        if let Some(d) = &p.default {
            collect_expr(d, n);
        }
    }
}

fn collect_stmt<'a>(s: &'a Stmt, n: &mut Numbering<'a>) {
    let mut names = Vec::new();
    match s {
        Stmt::FunctionDef { params, body, .. } => {
            collect_params(params, n);
            body.iter().for_each(|s| collect_stmt(s, n));
        }
        Stmt::ClassDef { body, .. } => body.iter().for_each(|s| collect_stmt(s, n)),
        Stmt::Assign { targets, value } => {
            collect_expr(value, n);
            targets.iter().for_each(|t| target_names(t, &mut names));
        }
        Stmt::AugAssign { target, value, .. } => {
            collect_expr(value, n);
            target_names(target, &mut names);
        }
        Stmt::AnnAssign { target, value, .. } => {
            if let Some(v) = value {
                collect_expr(v, n);
            }
            target_names(target, &mut names);
        }
        Stmt::For { target, iter, body, orelse, .. } => {
            collect_expr(iter, n);
            target_names(target, &mut names);
            names.drain(..).for_each(|name| n.define(name));
            body.iter().chain(orelse).for_each(|s| collect_stmt(s, n));
        }
        Stmt::While { test, body, orelse } | Stmt::If { test, body, orelse } => {
            collect_expr(test, n);
            body.iter().chain(orelse).for_each(|s| collect_stmt(s, n));
        }
        Stmt::With { items, body, .. } => {
            for it in items {
                collect_expr(&it.context, n);
                if let Some(t) = &it.target {
                    target_names(t, &mut names);
                }
            }
            names.drain(..).for_each(|name| n.define(name));
            body.iter().for_each(|s| collect_stmt(s, n));
        }
        Stmt::Try { body, handlers, orelse, finalbody } => {
            body.iter().for_each(|s| collect_stmt(s, n));
            for h in handlers {
                if let Some(name) = &h.name {
                    n.define(name);
                }
                h.body.iter().for_each(|s| collect_stmt(s, n));
            }
            orelse.iter().chain(finalbody).for_each(|s| collect_stmt(s, n));
        }
        Stmt::Return(Some(e)) => collect_expr(e, n),
        Stmt::Expr(e) => {
            collect_expr(e, n);
            if let Some(obj) = method_receiver(e) {
                names.push(obj);
            }
        }
        _ => {}
    }
    names.into_iter().for_each(|name| n.define(name));
}

/// Definitions hidden inside expressions: comprehension targets, walrus
/// targets and lambda parameters.
fn collect_expr<'a>(e: &'a Expr, n: &mut Numbering<'a>) {
    walk_expr(e, &mut |e| match e {
        Expr::ListComp { generators, .. }
        | Expr::SetComp { generators, .. }
        | Expr::GeneratorExp { generators, .. }
        | Expr::DictComp { generators, .. } => {
            for g in generators {
                let mut names = Vec::new();
                target_names(&g.target, &mut names);
                names.into_iter().for_each(|name| n.define(name));
            }
        }
        Expr::NamedExpr { target, .. } => {
            if let Expr::Name(name) = target.as_ref() {
                n.define(name);
            }
        }
        Expr::Lambda { params, .. } => params.iter().for_each(|p| n.define(&p.name)),
        _ => {}
    });
}

/// Pre-order visit of `e` and every sub-expression.
fn walk_expr<'a>(e: &'a Expr, f: &mut impl FnMut(&'a Expr)) {
    f(e);
    let gens = |gs: &'a [Comprehension], f: &mut dyn FnMut(&'a Expr)| {
        for g in gs {
            f(&g.iter);
            f(&g.target);
            g.ifs.iter().for_each(&mut *f);
        }
    };
    let mut rec = |e: &'a Expr| walk_expr(e, f);
    match e {
        Expr::BoolOp { values, .. } => values.iter().for_each(rec),
        Expr::NamedExpr { target, value } => {
            rec(target);
            rec(value);
        }
        Expr::BinOp { left, right, .. } => {
            rec(left);
            rec(right);
        }
        Expr::UnaryOp { operand, .. } => rec(operand),
        Expr::Lambda { body, .. } => rec(body),
        Expr::IfExp { test, body, orelse } => {
            rec(test);
            rec(body);
            rec(orelse);
        }
        Expr::Dict(items) => {
            for it in items {
                match it {
                    DictItem::Pair(k, v) => {
                        rec(k);
                        rec(v);
                    }
                    DictItem::Unpack(v) => rec(v),
                }
            }
        }
        Expr::Set(es) | Expr::List(es) | Expr::Tuple(es) => es.iter().for_each(rec),
        Expr::ListComp { elt, generators } | Expr::SetComp { elt, generators } | Expr::GeneratorExp { elt, generators } => {
            gens(generators, &mut rec);
            rec(elt);
        }
        Expr::DictComp { key, value, generators } => {
            gens(generators, &mut rec);
            rec(key);
            rec(value);
        }
        Expr::Await(v) | Expr::YieldFrom(v) | Expr::Starred(v) => rec(v),
        Expr::Yield(v) => {
            if let Some(v) = v {
                rec(v);
            }
        }
        Expr::Compare { left, comparators, .. } => {
            rec(left);
            comparators.iter().for_each(rec);
        }
        Expr::Call { func, args } => {
            rec(func);
            args.iter().map(Arg::value).for_each(rec);
        }
        Expr::Attribute { value, .. } => rec(value),
        Expr::Subscript { value, slice } => {
            rec(value);
            rec(slice);
        }
        Expr::Slice { lower, upper, step } => {
            for p in [lower, upper, step].into_iter().flatten() {
                rec(p);
            }
        }
        Expr::Constant(..) | Expr::Name(_) => {}
    }
}

struct Builder<'a> {
    vars: HashMap<&'a str, u32>,
    graph: DataFlowGraph,
}

impl<'a> Builder<'a> {
    fn var(&self, name: &str) -> Option<FlowNode> {
        self.vars.get(name).map(|&i| FlowNode::Var(i))
    }

    /// Variables read by `e`.
    fn uses(&self, e: &'a Expr) -> Vec<FlowNode> {
        let mut out = Vec::new();
        walk_expr(e, &mut |e| {
            if let Expr::Name(n) = e {
                if let Some(v) = self.var(n) {
                    out.push(v);
                }
            }
        });
        out
    }

    /// Variables read by an assignment target: subscript indices and the
    /// base itself for subscript/attribute targets.
    fn target_uses(&self, e: &'a Expr) -> Vec<FlowNode> {
        match e {
            Expr::Subscript { value, slice } => {
                let mut u = self.uses(slice);
                u.extend(self.target_uses(value));
                u.extend(self.uses(value));
                u
            }
            Expr::Attribute { value, .. } => self.uses(value),
            Expr::Tuple(es) | Expr::List(es) => es.iter().flat_map(|e| self.target_uses(e)).collect(),
            Expr::Starred(e) => self.target_uses(e),
            _ => Vec::new(),
        }
    }

    fn defs(&self, target: &'a Expr) -> Vec<FlowNode> {
        let mut names = Vec::new();
        target_names(target, &mut names);
        names.into_iter().filter_map(|n| self.var(n)).collect()
    }

    fn flow(&mut self, from: &[FlowNode], to: &[FlowNode]) {
        for &f in from {
            for &t in to {
                self.graph.edges.insert((f, t));
            }
        }
    }

    /// Edges internal to an expression: comprehension iterables into their
    /// targets, walrus values into their targets.
    fn expr_internal(&mut self, e: &'a Expr) {
        let mut pending: Vec<(Vec<FlowNode>, Vec<FlowNode>)> = Vec::new();
        walk_expr(e, &mut |e| match e {
            Expr::ListComp { generators, .. }
            | Expr::SetComp { generators, .. }
            | Expr::GeneratorExp { generators, .. }
            | Expr::DictComp { generators, .. } => {
                for g in generators {
                    pending.push((self.uses(&g.iter), self.defs(&g.target)));
                }
            }
            Expr::NamedExpr { target, value } => pending.push((self.uses(value), self.defs(target))),
            _ => {}
        });
        for (from, to) in pending {
            self.flow(&from, &to);
        }
    }

    fn params(&mut self, params: &'a [Param]) {
        for p in params {
            if let Some(d) = &p.default {
                let from = self.uses(d);
                let to: Vec<FlowNode> = self.var(&p.name).into_iter().collect();
                self.flow(&from, &to);
            }
        }
    }

    fn stmt(&mut self, s: &'a Stmt) {
        match s {
            Stmt::FunctionDef { params, body, .. } => {
                self.params(params);
                body.iter().for_each(|s| self.stmt(s));
            }
            Stmt::ClassDef { body, .. } => body.iter().for_each(|s| self.stmt(s)),
            Stmt::Assign { targets, value } => {
                self.expr_internal(value);
                let mut from = self.uses(value);
                let mut to = Vec::new();
                for t in targets {
                    from.extend(self.target_uses(t));
                    to.extend(self.defs(t));
                }
                self.flow(&from, &to);
            }
            Stmt::AugAssign { target, value, .. } => {
                self.expr_internal(value);
                let mut from = self.uses(value);
                from.extend(self.uses(target));
                from.extend(self.target_uses(target));
                let to = self.defs(target);
                self.flow(&from, &to);
            }
            Stmt::AnnAssign { target, value: Some(value), .. } => {
                self.expr_internal(value);
                let mut from = self.uses(value);
                from.extend(self.target_uses(target));
                let to = self.defs(target);
                self.flow(&from, &to);
            }
            Stmt::For { target, iter, body, orelse, .. } => {
                self.expr_internal(iter);
                let from = self.uses(iter);
                let to = self.defs(target);
                self.flow(&from, &to);
                body.iter().chain(orelse).for_each(|s| self.stmt(s));
            }
            Stmt::While { test, body, orelse } | Stmt::If { test, body, orelse } => {
                self.expr_internal(test);
                body.iter().chain(orelse).for_each(|s| self.stmt(s));
            }
            Stmt::With { items, body, .. } => {
                for it in items {
                    if let Some(t) = &it.target {
                        let from = self.uses(&it.context);
                        let to = self.defs(t);
                        self.flow(&from, &to);
                    }
                }
                body.iter().for_each(|s| self.stmt(s));
            }
            Stmt::Try { body, handlers, orelse, finalbody } => {
                body.iter().for_each(|s| self.stmt(s));
                for h in handlers {
                    h.body.iter().for_each(|s| self.stmt(s));
                }
                orelse.iter().chain(finalbody).for_each(|s| self.stmt(s));
            }
            Stmt::Return(Some(e)) => {
                self.expr_internal(e);
                let from = self.uses(e);
                self.flow(&from, &[FlowNode::Return]);
            }
            Stmt::Expr(e) => {
                self.expr_internal(e);
                if let (Some(obj), Expr::Call { args, .. }) = (method_receiver(e), e) {
                    let from: Vec<FlowNode> = args.iter().flat_map(|a| self.uses(a.value())).collect();
                    let to: Vec<FlowNode> = self.var(obj).into_iter().collect();
                    self.flow(&from, &to);
                }
            }
            _ => {}
        }
    }
}

fn logical_lines(lexed: &Lexed) -> Vec<Vec<&Token>> {
    let mut lines = Vec::new();
    let mut cur = Vec::new();
    for t in &lexed.tokens {
        match t.kind {
            TokenKind::Newline | TokenKind::EndMarker => {
                if !cur.is_empty() {
                    lines.push(std::mem::take(&mut cur));
                }
            }
            k if k.is_significant() => cur.push(t),
            _ => {}
        }
    }
    if !cur.is_empty() {
        lines.push(cur);
    }
    lines
}

/// Index of a top-level `=` or augmented assignment delimiter.
fn assignment_split(line: &[&Token]) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in line.iter().enumerate() {
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            s if depth == 0 && t.kind == TokenKind::Delimiter && s.ends_with('=') => return Some(i),
            _ => {}
        }
    }
    None
}

fn token_defs<'a>(line: &[&'a Token]) -> Vec<&'a str> {
    let ident = |t: &&Token| t.kind == TokenKind::Identifier;
    let mut out = Vec::new();
    match line[0].text.as_str() {
        "def" => {
            let mut depth = 0;
            for (i, t) in line.iter().enumerate() {
                match t.text.as_str() {
                    "(" => depth += 1,
                    ")" => depth -= 1,
                    _ if depth == 1 && ident(t) && matches!(line[i - 1].text.as_str(), "(" | "," | "*" | "**") => {
                        out.push(t.text.as_str())
                    }
                    _ => {}
                }
            }
        }
        "for" => {
            for t in line[1..].iter().take_while(|t| t.text != "in") {
                if ident(t) {
                    out.push(t.text.as_str());
                }
            }
        }
        _ => {
            if let Some(eq) = assignment_split(line) {
                let mut depth = 0;
                for (i, t) in line[..eq].iter().enumerate() {
                    match t.text.as_str() {
                        "(" | "[" | "{" => depth += 1,
                        ")" | "]" | "}" => depth -= 1,
                        _ if depth == 0 && ident(t) && (i == 0 || line[i - 1].text != ".") => out.push(t.text.as_str()),
                        _ => {}
                    }
                }
            } else if line.len() > 3 && ident(&line[0]) && line[1].text == "." && ident(&line[2]) && line[3].text == "(" {
                out.push(line[0].text.as_str());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_module, tokenize};
    use FlowNode::{Return, Var};

    fn graph(src: &str) -> DataFlowGraph {
        DataFlowGraph::from_module(&parse_module(src).unwrap())
    }

    #[test]
    fn params_numbered_first() {
        let g = graph("def f(a, b):\n    c = a + b\n    return c\n");
        let expected: BTreeSet<_> = [(Var(0), Var(2)), (Var(1), Var(2)), (Var(2), Return)].into();
        assert_eq!(g.edges, expected);
    }

    #[test]
    fn builtins_and_functions_are_not_variables() {
        let g = graph("def f(xs):\n    return sorted(xs, key=len)\n");
        assert_eq!(g.edges, [(Var(0), Return)].into());
    }

    #[test]
    fn method_calls_and_loops() {
        let g = graph("def f(xs):\n    out = []\n    for x in xs:\n        out.append(x * 2)\n    return out\n");
        // xs=0, out=1, x=2
        let expected: BTreeSet<_> = [(Var(0), Var(2)), (Var(2), Var(1)), (Var(1), Return)].into();
        assert_eq!(g.edges, expected);
    }

    #[test]
    fn comprehension_targets() {
        let g = graph("def f(xs):\n    return [y + 1 for y in xs]\n");
        let expected: BTreeSet<_> = [(Var(0), Var(1)), (Var(0), Return), (Var(1), Return)].into();
        assert_eq!(g.edges, expected);
    }

    #[test]
    fn no_definitions_means_empty() {
        assert!(graph("print(1)\n").is_empty());
        assert_eq!(dataflow_similarity::<f64>(&DataFlowGraph::default(), &DataFlowGraph::default()), 1.0);
    }

    #[test]
    fn jaccard_counts() {
        let a = DataFlowGraph { edges: [(Var(0), Var(1)), (Var(1), Return), (Var(0), Return)].into() };
        let b = DataFlowGraph { edges: [(Var(0), Var(1)), (Var(1), Return), (Var(2), Return), (Var(1), Var(2))].into() };
        assert_eq!(dataflow_similarity::<f64>(&a, &b), 0.4);
        assert_eq!(dataflow_similarity::<f64>(&a, &DataFlowGraph::default()), 0.0);
    }

    #[test]
    fn token_fallback_matches_parser_on_simple_code() {
        let src = "def f(a, b):\n    c = a + b\n    return c\n";
        assert_eq!(DataFlowGraph::from_tokens(&tokenize(src)), graph(src));
        let broken = "def f(a, b):\n    c = a + b\n    return c +\n";
        let g = DataFlowGraph::from_tokens(&tokenize(broken));
        assert!(g.edges.contains(&(Var(2), Return)));
    }
}
