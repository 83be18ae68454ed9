//! Python tokenizer.
//!
//! Lenient by construction: forum snippets are often partial, so lexing never
//! fails outright. Problems are collected in [`Lexed::errors`] and the parser
//! refuses input that has any.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    Operator,
    Delimiter,
    Comment,
    Newline,
    Indent,
    Dedent,
    EndMarker,
}

impl TokenKind {
    /// Tokens that carry program text (no layout or comments).
    pub fn is_significant(self) -> bool {
        matches!(
            self,
            TokenKind::Identifier
                | TokenKind::Keyword
                | TokenKind::Literal
                | TokenKind::Operator
                | TokenKind::Delimiter
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offsets into the lexed source.
    pub start: usize,
    pub end: usize,
    /// 0-based physical line of `start`.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line + 1, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub errors: Vec<LexError>,
}

impl Lexed {
    pub fn significant(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.kind.is_significant())
    }
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

// Longest first; `classify_punct` decides operator vs delimiter.
const PUNCT: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==",
    "!=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@",
    "&", "|", "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

const OPERATORS: &[&str] = &[
    "+", "-", "*", "**", "/", "//", "%", "@", "<<", ">>", "&", "|", "^", "~", ":=", "<", ">",
    "<=", ">=", "==", "!=",
];

fn classify_punct(p: &str) -> TokenKind {
    if OPERATORS.contains(&p) {
        TokenKind::Operator
    } else {
        TokenKind::Delimiter
    }
}

const TAB_SIZE: usize = 8;

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    depth: usize,
    indents: Vec<usize>,
    at_line_start: bool,
    out: Lexed,
}

pub fn tokenize(src: &str) -> Lexed {
    let mut lx = Lexer {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        line: 0,
        depth: 0,
        indents: vec![0],
        at_line_start: true,
        out: Lexed::default(),
    };
    lx.run();
    lx.out
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn push(&mut self, kind: TokenKind, start: usize, end: usize, line: usize) {
        self.out.tokens.push(Token {
            kind,
            text: self.src[start..end].to_string(),
            start,
            end,
            line,
        });
    }

    fn error(&mut self, line: usize, message: impl Into<String>) {
        self.out.errors.push(LexError { line, message: message.into() });
    }

    fn last_is_layout(&self) -> bool {
        match self.out.tokens.iter().rev().find(|t| t.kind != TokenKind::Comment) {
            None => true,
            Some(t) => matches!(t.kind, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent),
        }
    }

    fn run(&mut self) {
        while self.pos < self.bytes.len() {
            if self.at_line_start && self.depth == 0 {
                if self.handle_indentation() {
                    continue;
                }
            }
            self.at_line_start = false;
            let c = match self.peek() {
                Some(c) => c,
                None => break,
            };
            let start = self.pos;
            match c {
                ' ' | '\t' | '\x0c' => self.pos += 1,
                '\r' => self.pos += 1,
                '\n' => {
                    if self.depth == 0 && !self.last_is_layout() {
                        self.push(TokenKind::Newline, start, start + 1, self.line);
                    }
                    self.pos += 1;
                    self.line += 1;
                    self.at_line_start = true;
                }
                '#' => {
                    let end = self.src[start..].find('\n').map_or(self.bytes.len(), |i| start + i);
                    self.push(TokenKind::Comment, start, end, self.line);
                    self.pos = end;
                }
                '\\' => {
                    // explicit line joining
                    let rest = &self.src[start + 1..];
                    let trimmed = rest.trim_start_matches([' ', '\t', '\r']);
                    if trimmed.starts_with('\n') {
                        self.pos = start + 1 + (rest.len() - trimmed.len()) + 1;
                        self.line += 1;
                    } else {
                        self.error(self.line, "stray backslash");
                        self.push(TokenKind::Delimiter, start, start + 1, self.line);
                        self.pos += 1;
                    }
                }
                '0'..='9' => self.number(),
                '.' if self.peek_at(1).is_some_and(|b| b.is_ascii_digit()) => self.number(),
                '"' | '\'' => self.string(start),
                c if c == '_' || c.is_alphabetic() => self.name_or_string(),
                _ => self.punct(),
            }
        }
        if !self.last_is_layout() {
            self.push(TokenKind::Newline, self.pos, self.pos, self.line);
        }
        if self.depth > 0 {
            self.error(self.line, "unclosed bracket at end of input");
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent, self.pos, self.pos, self.line);
        }
        self.push(TokenKind::EndMarker, self.pos, self.pos, self.line);
    }

    /// Returns true when the whole line was consumed (blank or comment-only).
    fn handle_indentation(&mut self) -> bool {
        let start = self.pos;
        let mut col = 0usize;
        let mut i = self.pos;
        while i < self.bytes.len() {
            match self.bytes[i] {
                b' ' => col += 1,
                b'\t' => col = (col / TAB_SIZE + 1) * TAB_SIZE,
                b'\x0c' => col = 0,
                _ => break,
            }
            i += 1;
        }
        let next = self.bytes.get(i).copied();
        match next {
            None => {
                self.pos = i;
                return true;
            }
            Some(b'\n') => {
                self.pos = i + 1;
                self.line += 1;
                return true;
            }
            Some(b'\r') if self.bytes.get(i + 1) == Some(&b'\n') => {
                self.pos = i + 2;
                self.line += 1;
                return true;
            }
            Some(b'#') => {
                let end = self.src[i..].find('\n').map_or(self.bytes.len(), |k| i + k);
                self.push(TokenKind::Comment, i, end, self.line);
                self.pos = end;
                if self.pos < self.bytes.len() {
                    self.pos += 1;
                    self.line += 1;
                }
                return true;
            }
            _ => {}
        }
        self.pos = i;
        self.at_line_start = false;
        let current = *self.indents.last().unwrap_or(&0);
        if col > current {
            self.indents.push(col);
            self.push(TokenKind::Indent, start, i, self.line);
        } else if col < current {
            while col < *self.indents.last().unwrap_or(&0) {
                self.indents.pop();
                self.push(TokenKind::Dedent, i, i, self.line);
            }
            if col != *self.indents.last().unwrap_or(&0) {
                self.error(self.line, "unindent does not match any outer indentation level");
                self.indents.push(col);
            }
        }
        false
    }

    fn number(&mut self) {
        let start = self.pos;
        let b = self.bytes;
        let mut i = self.pos;
        let radix_prefix = b[i] == b'0'
            && matches!(b.get(i + 1), Some(b'x' | b'X' | b'o' | b'O' | b'b' | b'B'));
        if radix_prefix {
            i += 2;
            while i < b.len() && (b[i].is_ascii_hexdigit() || b[i] == b'_') {
                i += 1;
            }
        } else {
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                i += 1;
            }
            if i < b.len() && b[i] == b'.' {
                i += 1;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                    i += 1;
                }
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                        i += 1;
                    }
                }
            }
            if i < b.len() && (b[i] == b'j' || b[i] == b'J') {
                i += 1;
            }
        }
        self.pos = i;
        self.push(TokenKind::Literal, start, i, self.line);
    }

    fn name_or_string(&mut self) {
        let start = self.pos;
        let mut end = start;
        for (off, ch) in self.src[start..].char_indices() {
            if ch == '_' || ch.is_alphanumeric() {
                end = start + off + ch.len_utf8();
            } else {
                break;
            }
        }
        let word = &self.src[start..end];
        let is_prefix = word.len() <= 2
            && word.chars().all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'));
        if is_prefix && matches!(self.bytes.get(end), Some(b'"' | b'\'')) {
            self.pos = end;
            self.string(start);
            return;
        }
        self.pos = end;
        let kind = if is_keyword(word) { TokenKind::Keyword } else { TokenKind::Identifier };
        self.push(kind, start, end, self.line);
    }

    /// `self.pos` sits on the opening quote; `start` includes any prefix.
    fn string(&mut self, start: usize) {
        let line = self.line;
        let quote = self.bytes[self.pos];
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(&c) = self.bytes.get(self.pos) else {
                self.error(line, "unterminated string literal");
                break;
            };
            if c == b'\\' {
                if self.bytes.get(self.pos + 1) == Some(&b'\n') {
                    self.line += 1;
                }
                // raw strings still cannot end on an escaped quote
                self.pos += 2;
                continue;
            }
            if c == b'\n' {
                if !triple {
                    self.error(line, "unterminated string literal");
                    break;
                }
                self.line += 1;
            }
            if c == quote {
                if !triple {
                    self.pos += 1;
                    break;
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    self.pos += 3;
                    break;
                }
            }
            self.pos += 1;
        }
        self.pos = self.pos.min(self.bytes.len());
        // never split a UTF-8 sequence after a trailing backslash
        while !self.src.is_char_boundary(self.pos) {
            self.pos += 1;
        }
        self.push(TokenKind::Literal, start, self.pos, line);
    }

    fn punct(&mut self) {
        let start = self.pos;
        let rest = &self.src[start..];
        if let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) {
            match *p {
                "(" | "[" | "{" => self.depth += 1,
                ")" | "]" | "}" => {
                    if self.depth == 0 {
                        self.error(self.line, format!("unmatched '{p}'"));
                    }
                    self.depth = self.depth.saturating_sub(1);
                }
                _ => {}
            }
            self.pos += p.len();
            self.push(classify_punct(p), start, self.pos, self.line);
        } else {
            let ch = self.peek().unwrap_or('\0');
            self.pos += ch.len_utf8().max(1);
            self.error(self.line, format!("invalid character {ch:?}"));
            self.push(TokenKind::Delimiter, start, self.pos, self.line);
        }
    }
}

/// Byte ranges of comments in `src`, in order.
pub fn comment_spans(src: &str) -> Vec<(usize, usize)> {
    tokenize(src)
        .tokens
        .into_iter()
        .filter(|t| t.kind == TokenKind::Comment)
        .map(|t| (t.start, t.end))
        .collect()
}
