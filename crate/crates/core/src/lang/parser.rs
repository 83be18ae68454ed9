//! Recursive-descent parser for a practical subset of Python 3.
//!
//! Covers what benchmark solutions and forum answers use: functions, classes,
//! control flow, comprehensions, lambdas, slicing, decorators, try/with.
//! `match` statements and Python 2 syntax are rejected; callers fall back to
//! the delimiter tree for such snippets.

use std::fmt;

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line + 1, self.message)
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = Result<T, ParseError>;

pub fn parse_module(src: &str) -> PResult<Module> {
    let lexed = tokenize(src);
    if let Some(e) = lexed.errors.first() {
        return Err(ParseError { line: e.line, message: e.message.clone() });
    }
    let tokens: Vec<Token> =
        lexed.tokens.into_iter().filter(|t| t.kind != TokenKind::Comment).collect();
    let mut p = Parser { toks: tokens, pos: 0 };
    let mut body = Vec::new();
    while !p.at_kind(TokenKind::EndMarker) {
        if p.eat_kind(TokenKind::Newline) {
            continue;
        }
        body.extend(p.statement()?);
    }
    Ok(Module { body })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

const AUG_OPS: &[&str] = &["+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "^=", "|=", "@="];

impl Parser {
    fn cur(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_tok(&self, off: usize) -> &Token {
        &self.toks[(self.pos + off).min(self.toks.len() - 1)]
    }

    fn advance(&mut self) -> Token {
        let t = self.cur().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = self.cur();
        Err(ParseError { line: t.line, message: format!("{} (at {:?})", msg.into(), t.text) })
    }

    fn at_kind(&self, kind: TokenKind) -> bool {
        self.cur().kind == kind
    }

    fn at(&self, text: &str) -> bool {
        let t = self.cur();
        t.kind.is_significant() && t.kind != TokenKind::Literal && t.text == text
    }

    fn at_any(&self, texts: &[&str]) -> bool {
        texts.iter().any(|t| self.at(t))
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kind(&mut self, kind: TokenKind) -> bool {
        if self.at_kind(kind) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<()> {
        if self.eat(text) {
            Ok(())
        } else {
            self.err(format!("expected '{text}'"))
        }
    }

    fn name(&mut self) -> PResult<Ident> {
        if self.at_kind(TokenKind::Identifier) {
            Ok(self.advance().text)
        } else {
            self.err("expected identifier")
        }
    }

    fn end_of_simple(&self) -> bool {
        self.at_kind(TokenKind::Newline) || self.at_kind(TokenKind::EndMarker) || self.at(";")
    }

    // ---------------------------------------------------------------- statements

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        if self.at_any(&["def", "class", "if", "while", "for", "try", "with", "@"])
            || (self.at("async") && matches!(self.peek_tok(1).text.as_str(), "def" | "for" | "with"))
        {
            Ok(vec![self.compound()?])
        } else {
            self.simple_line()
        }
    }

    fn simple_line(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![self.small_statement()?];
        while self.eat(";") {
            if self.at_kind(TokenKind::Newline) || self.at_kind(TokenKind::EndMarker) {
                break;
            }
            out.push(self.small_statement()?);
        }
        if !self.eat_kind(TokenKind::Newline) && !self.at_kind(TokenKind::EndMarker) {
            return self.err("expected end of statement");
        }
        Ok(out)
    }

    fn small_statement(&mut self) -> PResult<Stmt> {
        let t = self.cur().clone();
        if t.kind == TokenKind::Keyword {
            match t.text.as_str() {
                "pass" => {
                    self.advance();
                    return Ok(Stmt::Pass);
                }
                "break" => {
                    self.advance();
                    return Ok(Stmt::Break);
                }
                "continue" => {
                    self.advance();
                    return Ok(Stmt::Continue);
                }
                "return" => {
                    self.advance();
                    if self.end_of_simple() {
                        return Ok(Stmt::Return(None));
                    }
                    return Ok(Stmt::Return(Some(self.star_exprs_as_tuple()?)));
                }
                "del" => {
                    self.advance();
                    let mut targets = vec![self.bitor()?];
                    while self.eat(",") {
                        if self.end_of_simple() {
                            break;
                        }
                        targets.push(self.bitor()?);
                    }
                    return Ok(Stmt::Delete(targets));
                }
                "raise" => {
                    self.advance();
                    if self.end_of_simple() {
                        return Ok(Stmt::Raise { exc: None, cause: None });
                    }
                    let exc = self.test()?;
                    let cause = if self.eat("from") { Some(self.test()?) } else { None };
                    return Ok(Stmt::Raise { exc: Some(exc), cause });
                }
                "assert" => {
                    self.advance();
                    let test = self.test()?;
                    let msg = if self.eat(",") { Some(self.test()?) } else { None };
                    return Ok(Stmt::Assert { test, msg });
                }
                "global" | "nonlocal" => {
                    self.advance();
                    let mut names = vec![self.name()?];
                    while self.eat(",") {
                        names.push(self.name()?);
                    }
                    return Ok(if t.text == "global" {
                        Stmt::Global(names)
                    } else {
                        Stmt::Nonlocal(names)
                    });
                }
                "import" => {
                    self.advance();
                    let mut names = vec![self.dotted_alias()?];
                    while self.eat(",") {
                        names.push(self.dotted_alias()?);
                    }
                    return Ok(Stmt::Import(names));
                }
                "from" => return self.import_from(),
                _ => {}
            }
        }
        self.expr_statement()
    }

    fn dotted_name(&mut self) -> PResult<String> {
        let mut name = self.name()?;
        while self.eat(".") {
            name.push('.');
            name.push_str(&self.name()?);
        }
        Ok(name)
    }

    fn dotted_alias(&mut self) -> PResult<Alias> {
        let name = self.dotted_name()?;
        let asname = if self.eat("as") { Some(self.name()?) } else { None };
        Ok(Alias { name, asname })
    }

    fn import_from(&mut self) -> PResult<Stmt> {
        self.expect("from")?;
        let mut level = 0;
        loop {
            if self.eat(".") {
                level += 1;
            } else if self.eat("...") {
                level += 3;
            } else {
                break;
            }
        }
        let module = if self.at("import") { None } else { Some(self.dotted_name()?) };
        self.expect("import")?;
        let mut names = Vec::new();
        if self.eat("*") {
            names.push(Alias { name: "*".into(), asname: None });
        } else {
            let paren = self.eat("(");
            loop {
                let name = self.name()?;
                let asname = if self.eat("as") { Some(self.name()?) } else { None };
                names.push(Alias { name, asname });
                if !self.eat(",") {
                    break;
                }
                if paren && self.at(")") {
                    break;
                }
            }
            if paren {
                self.expect(")")?;
            }
        }
        Ok(Stmt::ImportFrom { module, names, level })
    }

    fn expr_statement(&mut self) -> PResult<Stmt> {
        let first = self.star_exprs_as_tuple()?;
        if self.eat(":") {
            let annotation = self.test()?;
            let value = if self.eat("=") { Some(self.assign_rhs()?) } else { None };
            return Ok(Stmt::AnnAssign { target: first, annotation, value });
        }
        if let Some(op) = AUG_OPS.iter().find(|op| self.at(op)) {
            let op = BinOp::from_symbol(op.trim_end_matches('=')).expect("aug op table");
            self.advance();
            let value = self.assign_rhs()?;
            return Ok(Stmt::AugAssign { target: first, op, value });
        }
        if self.at("=") {
            let mut targets = vec![first];
            let mut value;
            loop {
                self.expect("=")?;
                value = self.assign_rhs()?;
                if self.at("=") {
                    targets.push(value);
                } else {
                    break;
                }
            }
            return Ok(Stmt::Assign { targets, value });
        }
        Ok(Stmt::Expr(first))
    }

    fn assign_rhs(&mut self) -> PResult<Expr> {
        if self.at("yield") {
            self.yield_expr()
        } else {
            self.star_exprs_as_tuple()
        }
    }

    fn compound(&mut self) -> PResult<Stmt> {
        if self.at("@") {
            let mut decorators = Vec::new();
            while self.eat("@") {
                decorators.push(self.namedexpr_test()?);
                if !self.eat_kind(TokenKind::Newline) {
                    return self.err("expected newline after decorator");
                }
            }
            let mut stmt = if self.at("class") { self.class_def()? } else { self.func_def()? };
            match &mut stmt {
                Stmt::FunctionDef { decorators: d, .. } | Stmt::ClassDef { decorators: d, .. } => {
                    *d = decorators
                }
                _ => unreachable!(),
            }
            return Ok(stmt);
        }
        match self.cur().text.as_str() {
            "def" | "async" if self.at("def") || self.peek_tok(1).text == "def" => self.func_def(),
            "class" => self.class_def(),
            "if" => self.if_stmt(),
            "while" => {
                self.advance();
                let test = self.namedexpr_test()?;
                let body = self.suite()?;
                let orelse = self.else_block()?;
                Ok(Stmt::While { test, body, orelse })
            }
            "for" | "async" if self.at("for") || self.peek_tok(1).text == "for" => {
                let is_async = self.eat("async");
                self.expect("for")?;
                let target = self.target_list()?;
                self.expect("in")?;
                let iter = self.star_exprs_as_tuple()?;
                let body = self.suite()?;
                let orelse = self.else_block()?;
                Ok(Stmt::For { target, iter, body, orelse, is_async })
            }
            "try" => self.try_stmt(),
            "with" | "async" => {
                let is_async = self.eat("async");
                self.expect("with")?;
                let mut items = Vec::new();
                loop {
                    let context = self.test()?;
                    let target = if self.eat("as") { Some(self.target_list_single()?) } else { None };
                    items.push(WithItem { context, target });
                    if !self.eat(",") {
                        break;
                    }
                }
                let body = self.suite()?;
                Ok(Stmt::With { items, body, is_async })
            }
            _ => self.err("unexpected token"),
        }
    }

    fn func_def(&mut self) -> PResult<Stmt> {
        let is_async = self.eat("async");
        self.expect("def")?;
        let name = self.name()?;
        self.expect("(")?;
        let params = self.params(")", true)?;
        self.expect(")")?;
        let returns = if self.eat("->") { Some(self.test()?) } else { None };
        let body = self.suite()?;
        Ok(Stmt::FunctionDef { name, params, returns, body, decorators: Vec::new(), is_async })
    }

    fn class_def(&mut self) -> PResult<Stmt> {
        self.expect("class")?;
        let name = self.name()?;
        let bases = if self.eat("(") {
            let args = self.call_args()?;
            self.expect(")")?;
            args
        } else {
            Vec::new()
        };
        let body = self.suite()?;
        Ok(Stmt::ClassDef { name, bases, body, decorators: Vec::new() })
    }

    fn params(&mut self, close: &str, annotations: bool) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        while !self.at(close) {
            if self.eat("/") {
                // positional-only marker
            } else if self.eat("**") {
                let name = self.name()?;
                let annotation = self.param_annotation(annotations)?;
                params.push(Param { name, kind: ParamKind::KwArgs, annotation, default: None });
            } else if self.eat("*") {
                if self.at_kind(TokenKind::Identifier) {
                    let name = self.name()?;
                    let annotation = self.param_annotation(annotations)?;
                    params.push(Param { name, kind: ParamKind::VarArgs, annotation, default: None });
                }
            } else {
                let name = self.name()?;
                let annotation = self.param_annotation(annotations)?;
                let default = if self.eat("=") { Some(self.test()?) } else { None };
                params.push(Param { name, kind: ParamKind::Normal, annotation, default });
            }
            if !self.eat(",") {
                break;
            }
        }
        Ok(params)
    }

    fn param_annotation(&mut self, allowed: bool) -> PResult<Option<Expr>> {
        if allowed && self.eat(":") {
            Ok(Some(self.test()?))
        } else {
            Ok(None)
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        // `if` or `elif`
        self.advance();
        let test = self.namedexpr_test()?;
        let body = self.suite()?;
        let orelse = if self.at("elif") {
            vec![self.if_stmt()?]
        } else {
            self.else_block()?
        };
        Ok(Stmt::If { test, body, orelse })
    }

    fn else_block(&mut self) -> PResult<Vec<Stmt>> {
        if self.eat("else") {
            self.suite()
        } else {
            Ok(Vec::new())
        }
    }

    fn try_stmt(&mut self) -> PResult<Stmt> {
        self.expect("try")?;
        let body = self.suite()?;
        let mut handlers = Vec::new();
        while self.eat("except") {
            let (typ, name) = if self.at(":") {
                (None, None)
            } else {
                let typ = self.test()?;
                let name = if self.eat("as") || self.eat(",") { Some(self.name()?) } else { None };
                (Some(typ), name)
            };
            let hbody = self.suite()?;
            handlers.push(Handler { typ, name, body: hbody });
        }
        let orelse = self.else_block()?;
        let finalbody = if self.eat("finally") { self.suite()? } else { Vec::new() };
        if handlers.is_empty() && finalbody.is_empty() {
            return self.err("try without except or finally");
        }
        Ok(Stmt::Try { body, handlers, orelse, finalbody })
    }

    fn suite(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(":")?;
        if self.eat_kind(TokenKind::Newline) {
            if !self.eat_kind(TokenKind::Indent) {
                return self.err("expected an indented block");
            }
            let mut body = Vec::new();
            while !self.eat_kind(TokenKind::Dedent) {
                if self.at_kind(TokenKind::EndMarker) {
                    break;
                }
                if self.eat_kind(TokenKind::Newline) {
                    continue;
                }
                body.extend(self.statement()?);
            }
            Ok(body)
        } else {
            self.simple_line()
        }
    }

    // ---------------------------------------------------------------- targets

    fn target_list(&mut self) -> PResult<Expr> {
        let first = self.target_atom()?;
        if !self.at(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat(",") {
            if self.at("in") || self.at("=") {
                break;
            }
            elts.push(self.target_atom()?);
        }
        Ok(Expr::Tuple(elts))
    }

    fn target_list_single(&mut self) -> PResult<Expr> {
        self.target_atom()
    }

    fn target_atom(&mut self) -> PResult<Expr> {
        if self.eat("*") {
            return Ok(Expr::Starred(Box::new(self.bitor()?)));
        }
        self.bitor()
    }

    // ---------------------------------------------------------------- expressions

    /// Comma-separated expressions (with optional star items); more than one
    /// item or a trailing comma builds a tuple.
    fn star_exprs_as_tuple(&mut self) -> PResult<Expr> {
        let first = self.star_or_namedexpr()?;
        if !self.at(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat(",") {
            if self.expr_list_ends() {
                break;
            }
            elts.push(self.star_or_namedexpr()?);
        }
        Ok(Expr::Tuple(elts))
    }

    fn expr_list_ends(&self) -> bool {
        self.end_of_simple()
            || self.at_any(&["=", ":", ")", "]", "}", "in"])
            || AUG_OPS.iter().any(|op| self.at(op))
    }

    fn star_or_namedexpr(&mut self) -> PResult<Expr> {
        if self.eat("*") {
            Ok(Expr::Starred(Box::new(self.bitor()?)))
        } else {
            self.namedexpr_test()
        }
    }

    fn namedexpr_test(&mut self) -> PResult<Expr> {
        let e = self.test()?;
        if self.at(":=") {
            if !matches!(e, Expr::Name(_)) {
                return self.err("cannot use assignment expression here");
            }
            self.advance();
            let value = self.test()?;
            return Ok(Expr::NamedExpr { target: Box::new(e), value: Box::new(value) });
        }
        Ok(e)
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.at("lambda") {
            return self.lambda(true);
        }
        let body = self.or_test()?;
        if self.eat("if") {
            let test = self.or_test()?;
            self.expect("else")?;
            let orelse = self.test()?;
            return Ok(Expr::IfExp {
                test: Box::new(test),
                body: Box::new(body),
                orelse: Box::new(orelse),
            });
        }
        Ok(body)
    }

    fn test_nocond(&mut self) -> PResult<Expr> {
        if self.at("lambda") {
            return self.lambda(false);
        }
        self.or_test()
    }

    fn lambda(&mut self, allow_cond: bool) -> PResult<Expr> {
        self.expect("lambda")?;
        let params = self.params(":", false)?;
        self.expect(":")?;
        let body = if allow_cond { self.test()? } else { self.test_nocond()? };
        Ok(Expr::Lambda { params, body: Box::new(body) })
    }

    fn or_test(&mut self) -> PResult<Expr> {
        let first = self.and_test()?;
        if !self.at("or") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat("or") {
            values.push(self.and_test()?);
        }
        Ok(Expr::BoolOp { op: BoolOp::Or, values })
    }

    fn and_test(&mut self) -> PResult<Expr> {
        let first = self.not_test()?;
        if !self.at("and") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat("and") {
            values.push(self.not_test()?);
        }
        Ok(Expr::BoolOp { op: BoolOp::And, values })
    }

    fn not_test(&mut self) -> PResult<Expr> {
        if self.eat("not") {
            let operand = self.not_test()?;
            return Ok(Expr::UnaryOp { op: UnaryOp::Not, operand: Box::new(operand) });
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> Option<CmpOp> {
        let op = match self.cur().text.as_str() {
            "<" => CmpOp::Lt,
            ">" => CmpOp::Gt,
            "==" => CmpOp::Eq,
            ">=" => CmpOp::GtE,
            "<=" => CmpOp::LtE,
            "!=" => CmpOp::NotEq,
            "in" if self.at("in") => CmpOp::In,
            "not" if self.at("not") && self.peek_tok(1).text == "in" => {
                self.advance();
                CmpOp::NotIn
            }
            "is" if self.at("is") => {
                if self.peek_tok(1).text == "not" {
                    self.advance();
                    CmpOp::IsNot
                } else {
                    CmpOp::Is
                }
            }
            _ => return None,
        };
        self.advance();
        Some(op)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let left = self.bitor()?;
        let mut ops = Vec::new();
        let mut comparators = Vec::new();
        while let Some(op) = self.comp_op() {
            ops.push(op);
            comparators.push(self.bitor()?);
        }
        if ops.is_empty() {
            Ok(left)
        } else {
            Ok(Expr::Compare { left: Box::new(left), ops, comparators })
        }
    }

    fn binary_level(
        &mut self,
        ops: &[&str],
        next: fn(&mut Parser) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let mut left = next(self)?;
        loop {
            let Some(sym) = ops.iter().find(|s| self.at(s)) else { break };
            let op = BinOp::from_symbol(sym).expect("binary op table");
            self.advance();
            let right = next(self)?;
            left = Expr::BinOp { left: Box::new(left), op, right: Box::new(right) };
        }
        Ok(left)
    }

    fn bitor(&mut self) -> PResult<Expr> {
        self.binary_level(&["|"], Parser::bitxor)
    }

    fn bitxor(&mut self) -> PResult<Expr> {
        self.binary_level(&["^"], Parser::bitand)
    }

    fn bitand(&mut self) -> PResult<Expr> {
        self.binary_level(&["&"], Parser::shift)
    }

    fn shift(&mut self) -> PResult<Expr> {
        self.binary_level(&["<<", ">>"], Parser::arith)
    }

    fn arith(&mut self) -> PResult<Expr> {
        self.binary_level(&["+", "-"], Parser::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary_level(&["*", "/", "//", "%", "@"], Parser::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let op = match self.cur().text.as_str() {
            "-" if self.at("-") => UnaryOp::Neg,
            "+" if self.at("+") => UnaryOp::Pos,
            "~" if self.at("~") => UnaryOp::Invert,
            _ => return self.power(),
        };
        self.advance();
        let operand = self.factor()?;
        Ok(Expr::UnaryOp { op, operand: Box::new(operand) })
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = if self.eat("await") {
            Expr::Await(Box::new(self.primary()?))
        } else {
            self.primary()?
        };
        if self.eat("**") {
            let exp = self.factor()?;
            return Ok(Expr::BinOp { left: Box::new(base), op: BinOp::Pow, right: Box::new(exp) });
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            if self.eat("(") {
                let args = self.call_args()?;
                self.expect(")")?;
                e = Expr::Call { func: Box::new(e), args };
            } else if self.eat("[") {
                let slice = self.subscript_list()?;
                self.expect("]")?;
                e = Expr::Subscript { value: Box::new(e), slice: Box::new(slice) };
            } else if self.at(".") {
                self.advance();
                let attr = self.name()?;
                e = Expr::Attribute { value: Box::new(e), attr };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn call_args(&mut self) -> PResult<Vec<Arg>> {
        let mut args = Vec::new();
        while !self.at(")") {
            if self.eat("**") {
                args.push(Arg::DoubleStar(self.test()?));
            } else if self.eat("*") {
                args.push(Arg::Star(self.test()?));
            } else if self.at_kind(TokenKind::Identifier) && self.peek_tok(1).text == "=" {
                let name = self.name()?;
                self.expect("=")?;
                args.push(Arg::Keyword(name, self.test()?));
            } else {
                let e = self.namedexpr_test()?;
                if self.at("for") || self.at("async") {
                    let generators = self.comp_for()?;
                    args.push(Arg::Positional(Expr::GeneratorExp { elt: Box::new(e), generators }));
                } else {
                    args.push(Arg::Positional(e));
                }
            }
            if !self.eat(",") {
                break;
            }
        }
        Ok(args)
    }

    fn subscript_list(&mut self) -> PResult<Expr> {
        let first = self.subscript()?;
        if !self.at(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat(",") {
            if self.at("]") {
                break;
            }
            elts.push(self.subscript()?);
        }
        Ok(Expr::Tuple(elts))
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let lower = if self.at(":") { None } else { Some(Box::new(self.namedexpr_test()?)) };
        if !self.eat(":") {
            return Ok(*lower.expect("non-slice subscript has an expression"));
        }
        let upper = if self.at_any(&[":", "]", ","]) { None } else { Some(Box::new(self.test()?)) };
        let step = if self.eat(":") {
            if self.at_any(&["]", ","]) {
                None
            } else {
                Some(Box::new(self.test()?))
            }
        } else {
            None
        };
        Ok(Expr::Slice { lower, upper, step })
    }

    fn comp_for(&mut self) -> PResult<Vec<Comprehension>> {
        let mut gens = Vec::new();
        loop {
            let is_async = self.eat("async");
            if !self.eat("for") {
                if is_async {
                    return self.err("expected 'for'");
                }
                break;
            }
            let target = self.target_list()?;
            self.expect("in")?;
            let iter = self.or_test()?;
            let mut ifs = Vec::new();
            while self.eat("if") {
                ifs.push(self.test_nocond()?);
            }
            gens.push(Comprehension { target, iter, ifs, is_async });
        }
        Ok(gens)
    }

    fn yield_expr(&mut self) -> PResult<Expr> {
        self.expect("yield")?;
        if self.eat("from") {
            return Ok(Expr::YieldFrom(Box::new(self.test()?)));
        }
        if self.end_of_simple() || self.at(")") || self.at("=") {
            return Ok(Expr::Yield(None));
        }
        Ok(Expr::Yield(Some(Box::new(self.star_exprs_as_tuple()?))))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let t = self.cur().clone();
        match t.kind {
            TokenKind::Identifier => {
                self.advance();
                Ok(Expr::Name(t.text))
            }
            TokenKind::Literal => {
                if t.text.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
                    self.advance();
                    let lower = t.text.to_ascii_lowercase();
                    let kind = if lower.ends_with('j') {
                        ConstKind::Complex
                    } else if !lower.starts_with("0x")
                        && (lower.contains('.') || lower.contains('e'))
                    {
                        ConstKind::Float
                    } else {
                        ConstKind::Int
                    };
                    return Ok(Expr::Constant(kind, t.text));
                }
                // adjacent string literals concatenate
                let mut text = String::new();
                let mut bytes = false;
                while self.at_kind(TokenKind::Literal)
                    && !self.cur().text.starts_with(|c: char| c.is_ascii_digit() || c == '.')
                {
                    let s = self.advance().text;
                    let prefix: String =
                        s.chars().take_while(|c| *c != '\'' && *c != '"').collect();
                    bytes |= prefix.to_ascii_lowercase().contains('b');
                    text.push_str(&s);
                }
                Ok(Expr::Constant(if bytes { ConstKind::Bytes } else { ConstKind::Str }, text))
            }
            TokenKind::Keyword => match t.text.as_str() {
                "None" => {
                    self.advance();
                    Ok(Expr::Constant(ConstKind::None, t.text))
                }
                "True" | "False" => {
                    self.advance();
                    Ok(Expr::Constant(ConstKind::Bool, t.text))
                }
                "yield" => self.yield_expr(),
                _ => self.err("unexpected keyword"),
            },
            TokenKind::Delimiter | TokenKind::Operator => match t.text.as_str() {
                "..." => {
                    self.advance();
                    Ok(Expr::Constant(ConstKind::Ellipsis, t.text))
                }
                "(" => self.paren(),
                "[" => self.bracket(),
                "{" => self.brace(),
                _ => self.err("unexpected token"),
            },
            _ => self.err("unexpected end of line"),
        }
    }

    fn paren(&mut self) -> PResult<Expr> {
        self.expect("(")?;
        if self.eat(")") {
            return Ok(Expr::Tuple(Vec::new()));
        }
        if self.at("yield") {
            let e = self.yield_expr()?;
            self.expect(")")?;
            return Ok(e);
        }
        let first = self.star_or_namedexpr()?;
        if self.at("for") || self.at("async") {
            let generators = self.comp_for()?;
            self.expect(")")?;
            return Ok(Expr::GeneratorExp { elt: Box::new(first), generators });
        }
        if self.eat(")") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat(",") {
            if self.at(")") {
                break;
            }
            elts.push(self.star_or_namedexpr()?);
        }
        self.expect(")")?;
        Ok(Expr::Tuple(elts))
    }

    fn bracket(&mut self) -> PResult<Expr> {
        self.expect("[")?;
        if self.eat("]") {
            return Ok(Expr::List(Vec::new()));
        }
        let first = self.star_or_namedexpr()?;
        if self.at("for") || self.at("async") {
            let generators = self.comp_for()?;
            self.expect("]")?;
            return Ok(Expr::ListComp { elt: Box::new(first), generators });
        }
        let mut elts = vec![first];
        while self.eat(",") {
            if self.at("]") {
                break;
            }
            elts.push(self.star_or_namedexpr()?);
        }
        self.expect("]")?;
        Ok(Expr::List(elts))
    }

    fn brace(&mut self) -> PResult<Expr> {
        self.expect("{")?;
        if self.eat("}") {
            return Ok(Expr::Dict(Vec::new()));
        }
        let first_item = if self.eat("**") {
            DictItem::Unpack(self.bitor()?)
        } else {
            let e = self.star_or_namedexpr()?;
            if self.eat(":") {
                DictItem::Pair(e, self.test()?)
            } else {
                // set display or set comprehension
                if self.at("for") || self.at("async") {
                    let generators = self.comp_for()?;
                    self.expect("}")?;
                    return Ok(Expr::SetComp { elt: Box::new(e), generators });
                }
                let mut elts = vec![e];
                while self.eat(",") {
                    if self.at("}") {
                        break;
                    }
                    elts.push(self.star_or_namedexpr()?);
                }
                self.expect("}")?;
                return Ok(Expr::Set(elts));
            }
        };
        if let DictItem::Pair(k, v) = &first_item {
            if self.at("for") || self.at("async") {
                let generators = self.comp_for()?;
                self.expect("}")?;
                return Ok(Expr::DictComp {
                    key: Box::new(k.clone()),
                    value: Box::new(v.clone()),
                    generators,
                });
            }
        }
        let mut items = vec![first_item];
        while self.eat(",") {
            if self.at("}") {
                break;
            }
            if self.eat("**") {
                items.push(DictItem::Unpack(self.bitor()?));
            } else {
                let k = self.test()?;
                self.expect(":")?;
                items.push(DictItem::Pair(k, self.test()?));
            }
        }
        self.expect("}")?;
        Ok(Expr::Dict(items))
    }
}
