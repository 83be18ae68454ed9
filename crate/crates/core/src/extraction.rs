//! Code-snippet extraction from raw page markup.
//!
//! A small hand-rolled scanner instead of a DOM parser: snippets must keep
//! exact byte offsets into `raw_content` so repairs can splice the page
//! in place, and DOM builders discard source positions.
//!
//! Recognized regions, in priority order:
//! 1. `<pre>` containers (an inner `<code>` narrows the range) and block
//!    `<code>` elements whose content spans several lines;
//! 2. fenced blocks (```` ``` ```` or `~~~`) in text outside those containers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lang::lexer::comment_spans;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnippetOrigin {
    /// Inside an HTML code container; text is entity-escaped markup.
    #[default]
    Markup,
    /// A fenced block in text content.
    Fence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSnippet {
    pub snippet_id: String,
    pub url: String,
    /// Verbatim `raw_content[char_range]`.
    pub text: String,
    pub language_hint: Option<String>,
    /// Byte offsets into the page's `raw_content`.
    pub char_range: (usize, usize),
    #[serde(default)]
    pub origin: SnippetOrigin,
}

impl CodeSnippet {
    /// Source code with markup removed and entities decoded.
    pub fn code(&self) -> String {
        match self.origin {
            SnippetOrigin::Markup => decode_entities(&strip_tags(&self.text)),
            SnippetOrigin::Fence => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeLine {
    pub snippet_id: String,
    /// Physical line within the snippet's decoded code.
    pub line_index: usize,
    pub text: String,
}

pub fn snippet_id(url: &str, range: (usize, usize)) -> String {
    let mut h = Sha256::new();
    h.update(url.as_bytes());
    h.update([0u8]);
    h.update(range.0.to_le_bytes());
    h.update(range.1.to_le_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

/// Hex SHA-256 of a text; used for staleness checks.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// All code snippets of a page, ordered by position, never overlapping.
pub fn extract_snippets(url: &str, raw: &str) -> Vec<CodeSnippet> {
    let scan = scan_markup(raw);
    let mut regions = scan.containers;
    regions.extend(find_fences(raw, &scan.covered));
    regions.sort_by_key(|r| r.range);

    regions
        .into_iter()
        .filter_map(|r| {
            let text = raw[r.range.0..r.range.1].to_string();
            let snippet = CodeSnippet {
                snippet_id: snippet_id(url, r.range),
                url: url.to_string(),
                text,
                language_hint: r.language_hint,
                char_range: r.range,
                origin: r.origin,
            };
            if snippet.code().trim().is_empty() {
                None
            } else {
                Some(snippet)
            }
        })
        .collect()
}

/// Non-blank, comment-stripped lines of a snippet, in order.
pub fn split_lines(snippet: &CodeSnippet) -> Vec<CodeLine> {
    code_lines(&snippet.code())
        .into_iter()
        .map(|(line_index, text)| CodeLine {
            snippet_id: snippet.snippet_id.clone(),
            line_index,
            text,
        })
        .collect()
}

/// `(physical line index, trimmed text)` of the non-blank lines of `code`
/// once comments are removed.
pub fn code_lines(code: &str) -> Vec<(usize, String)> {
    let mut cleaned = code.as_bytes().to_vec();
    for (s, e) in comment_spans(code) {
        for b in &mut cleaned[s..e] {
            // keep multi-byte sequences valid by blanking every byte
            *b = b' ';
        }
    }
    let cleaned = String::from_utf8(cleaned).expect("only ASCII spaces were written");
    cleaned
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let t = l.trim();
            (!t.is_empty()).then(|| (i, t.to_string()))
        })
        .collect()
}

/// Tag-stripped, entity-decoded text around a byte range, at most `window`
/// bytes of raw content on each side.
pub fn prose_window(raw: &str, range: (usize, usize), window: usize) -> (String, String) {
    let mut lo = range.0.saturating_sub(window);
    while !raw.is_char_boundary(lo) {
        lo += 1;
    }
    let mut hi = (range.1 + window).min(raw.len());
    while !raw.is_char_boundary(hi) {
        hi -= 1;
    }
    let clean = |s: &str| {
        let s = match (s.find('>'), s.find('<')) {
            (Some(gt), Some(lt)) if gt < lt => &s[gt + 1..],
            (Some(gt), None) => &s[gt + 1..],
            _ => s,
        };
        let text = decode_entities(&strip_tags(s));
        text.split_whitespace().collect::<Vec<_>>().join(" ")
    };
    (clean(&raw[lo..range.0]), clean(&raw[range.1..hi]))
}

/// Remove markup tags; `<br>` becomes a newline. An unterminated `<` drops
/// the remainder.
pub fn strip_tags(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(lt) = rest.find('<') {
        out.push_str(&rest[..lt]);
        let after = &rest[lt..];
        if !looks_like_tag(after) {
            out.push('<');
            rest = &after[1..];
            continue;
        }
        match after.find('>') {
            Some(gt) => {
                let tag = after[1..gt].trim().to_ascii_lowercase();
                if tag == "br" || tag == "br/" || tag == "br /" {
                    out.push('\n');
                }
                rest = &after[gt + 1..];
            }
            None => {
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn looks_like_tag(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() > 1 && (b[1].is_ascii_alphabetic() || b[1] == b'/' || b[1] == b'!')
}

pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let after = &rest[amp..];
        let semi = after[..after.len().min(12)].find(';');
        let decoded = semi.and_then(|semi| {
            let name = &after[1..semi];
            let ch = match name {
                "lt" => Some('<'),
                "gt" => Some('>'),
                "amp" => Some('&'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                _ if name.starts_with("#x") || name.starts_with("#X") => {
                    u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
                }
                _ if name.starts_with('#') => name[1..].parse().ok().and_then(char::from_u32),
                _ => None,
            };
            ch.map(|c| (c, semi + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &after[len..];
            }
            None => {
                out.push('&');
                rest = &after[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Escape text for placement inside an HTML code container.
pub fn escape_markup(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            _ => out.push(c),
        }
    }
    out
}

struct Region {
    range: (usize, usize),
    language_hint: Option<String>,
    origin: SnippetOrigin,
}

#[derive(Default)]
struct MarkupScan {
    containers: Vec<Region>,
    /// Ranges where fences must not be searched: tags, comments, scripts,
    /// and code containers.
    covered: Vec<(usize, usize)>,
}

struct Tag<'a> {
    name: String,
    closing: bool,
    attrs: &'a str,
    start: usize,
    end: usize,
}

fn read_tag(raw: &str, at: usize) -> Option<Tag<'_>> {
    let rest = &raw[at..];
    if !looks_like_tag(rest) {
        return None;
    }
    let gt = rest.find('>')?;
    let inner = &rest[1..gt];
    let closing = inner.starts_with('/');
    let inner = inner.trim_start_matches('/');
    let name_len = inner
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
        .unwrap_or(inner.len());
    Some(Tag {
        name: inner[..name_len].to_ascii_lowercase(),
        closing,
        attrs: &inner[name_len..],
        start: at,
        end: at + gt + 1,
    })
}

/// Case-insensitive search for `</name` at or after `from`; returns the
/// start of the closing tag and the end of it.
fn find_close(raw: &str, from: usize, name: &str) -> Option<(usize, usize)> {
    let lower = raw[from..].to_ascii_lowercase();
    let needle = format!("</{name}");
    let mut search = 0;
    while let Some(i) = lower[search..].find(&needle) {
        let pos = search + i;
        let next = lower.as_bytes().get(pos + needle.len()).copied();
        if matches!(next, Some(b'>') | Some(b' ') | Some(b'\t') | Some(b'\n')) {
            let gt = lower[pos..].find('>')?;
            return Some((from + pos, from + pos + gt + 1));
        }
        search = pos + needle.len();
    }
    None
}

fn language_from_attrs(attrs: &str) -> Option<String> {
    let lower = attrs.to_ascii_lowercase();
    let idx = lower.find("class")?;
    let after = &attrs[idx + 5..];
    let after = after.trim_start().strip_prefix('=')?.trim_start();
    let value = match after.chars().next()? {
        q @ ('"' | '\'') => after[1..].split(q).next()?,
        _ => after.split(|c: char| c.is_whitespace()).next()?,
    };
    value.split_whitespace().find_map(|class| {
        let class = class.to_ascii_lowercase();
        for prefix in ["language-", "lang-", "brush:"] {
            if let Some(lang) = class.strip_prefix(prefix) {
                let lang = lang.trim_matches(|c: char| c == ';' || c == ':');
                if !lang.is_empty() {
                    return Some(lang.to_string());
                }
            }
        }
        match class.as_str() {
            "python" | "py" | "python3" | "java" | "javascript" | "cpp" | "c" => Some(class),
            _ => None,
        }
    })
}

fn scan_markup(raw: &str) -> MarkupScan {
    let mut scan = MarkupScan::default();
    let mut pos = 0;
    while let Some(off) = raw[pos..].find('<') {
        let at = pos + off;
        if raw[at..].starts_with("<!--") {
            let end = raw[at + 4..].find("-->").map_or(raw.len(), |i| at + 4 + i + 3);
            scan.covered.push((at, end));
            pos = end;
            continue;
        }
        let Some(tag) = read_tag(raw, at) else {
            pos = at + 1;
            continue;
        };
        scan.covered.push((tag.start, tag.end));
        pos = tag.end;
        if tag.closing {
            continue;
        }
        match tag.name.as_str() {
            "script" | "style" | "textarea" => {
                let end = find_close(raw, tag.end, &tag.name).map_or(raw.len(), |(_, e)| e);
                scan.covered.push((tag.start, end));
                pos = end;
            }
            "pre" => {
                let Some((close_start, close_end)) = find_close(raw, tag.end, "pre") else {
                    continue;
                };
                let mut range = (tag.end, close_start);
                let mut hint = language_from_attrs(tag.attrs);
                // narrow to a sole inner <code> element
                let inner = &raw[range.0..range.1];
                let lead = inner.len() - inner.trim_start().len();
                if let Some(code) = read_tag(raw, range.0 + lead).filter(|t| t.name == "code" && !t.closing) {
                    if let Some((cs, _)) = find_close(raw, code.end, "code") {
                        let trailing = raw[cs..range.1].trim();
                        let trailing_ok = trailing.strip_prefix("</code>").or_else(|| trailing.strip_prefix("</CODE>"));
                        if trailing_ok.is_some_and(|t| t.trim().is_empty()) {
                            hint = language_from_attrs(code.attrs).or(hint);
                            range = (code.end, cs);
                        }
                    }
                }
                scan.containers.push(Region { range, language_hint: hint, origin: SnippetOrigin::Markup });
                scan.covered.push((tag.start, close_end));
                pos = close_end;
            }
            "code" => {
                let Some((close_start, close_end)) = find_close(raw, tag.end, "code") else {
                    continue;
                };
                let content = decode_entities(&strip_tags(&raw[tag.end..close_start]));
                if content.trim().contains('\n') {
                    scan.containers.push(Region {
                        range: (tag.end, close_start),
                        language_hint: language_from_attrs(tag.attrs),
                        origin: SnippetOrigin::Markup,
                    });
                    scan.covered.push((tag.start, close_end));
                    pos = close_end;
                }
            }
            _ => {}
        }
    }
    scan
}

fn find_fences(raw: &str, covered: &[(usize, usize)]) -> Vec<Region> {
    let is_covered = |i: usize| covered.iter().any(|&(s, e)| i >= s && i < e);
    let mut out = Vec::new();
    let mut line_start = 0;
    let mut open: Option<(usize, &str, Option<String>)> = None;
    while line_start < raw.len() {
        let line_end = raw[line_start..].find('\n').map_or(raw.len(), |i| line_start + i);
        let line = &raw[line_start..line_end];
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        let fence = ["```", "~~~"].into_iter().find(|f| trimmed.starts_with(f));
        match (&open, fence) {
            (None, Some(marker)) if !is_covered(line_start + indent) => {
                let info = trimmed.trim_start_matches(marker.chars().next().unwrap()).trim();
                let hint = info.split_whitespace().next().map(|s| s.to_ascii_lowercase());
                let body_start = (line_end + 1).min(raw.len());
                open = Some((body_start, marker, hint));
            }
            (Some((body_start, marker, _)), Some(m)) if m == *marker && trimmed.trim_end().chars().all(|c| c == m.chars().next().unwrap()) => {
                let (body_start, _, hint) = open.take().unwrap();
                if line_start > body_start && !is_covered(body_start) {
                    out.push(Region {
                        range: (body_start, line_start),
                        language_hint: hint,
                        origin: SnippetOrigin::Fence,
                    });
                }
            }
            _ => {}
        }
        line_start = line_end + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const URL: &str = "https://example.org/q/1";

    #[test]
    fn single_pre_block() {
        let raw = "<html><body><p>Try this:</p><pre>def f(x):\n    return x + 1\n</pre></body></html>";
        let s = extract_snippets(URL, raw);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].code(), "def f(x):\n    return x + 1\n");
        assert_eq!(&raw[s[0].char_range.0..s[0].char_range.1], s[0].text);
    }

    #[test]
    fn prose_only_page_has_no_snippets() {
        let raw = "<html><body><p>Use a loop and add the numbers up.</p><p>Inline <code>sum()</code> works.</p></body></html>";
        assert!(extract_snippets(URL, raw).is_empty());
    }

    #[test]
    fn two_blocks_with_language_class() {
        let raw = concat!(
            "<div><pre>x = 1\n</pre>\n<p>or</p>\n",
            "<pre><code class=\"hljs language-python\">def g(a, b):\n    return a &lt; b\n</code></pre></div>"
        );
        let s = extract_snippets(URL, raw);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].language_hint, None);
        assert_eq!(s[1].language_hint.as_deref(), Some("python"));
        assert_eq!(s[1].code(), "def g(a, b):\n    return a < b\n");
        assert!(s[0].char_range.1 <= s[1].char_range.0);
        assert_ne!(s[0].snippet_id, s[1].snippet_id);
    }

    #[test]
    fn fenced_blocks_outside_containers() {
        let raw = "Answer:\n\n```python\ndef h():\n    return 2\n```\n\n<pre>```\nnot a fence\n```</pre>\n";
        let s = extract_snippets(URL, raw);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].origin, SnippetOrigin::Fence);
        assert_eq!(s[0].language_hint.as_deref(), Some("python"));
        assert_eq!(s[0].code(), "def h():\n    return 2\n");
        assert_eq!(s[1].origin, SnippetOrigin::Markup);
    }

    #[test]
    fn highlighted_spans_are_stripped() {
        let raw = "<pre><span class=\"k\">def</span> f():<br>    <span>pass</span></pre>";
        let s = extract_snippets(URL, raw);
        assert_eq!(s[0].code(), "def f():\n    pass");
    }

    #[test]
    fn malformed_markup_degrades_gracefully() {
        for raw in ["<pre>unterminated", "<<<>>>", "<pre", "```\nopen fence", "<!-- <pre>x</pre>", "&#xZZ; &lt"] {
            let _ = extract_snippets(URL, raw);
        }
        assert!(extract_snippets(URL, "<!-- <pre>x\n</pre> -->").is_empty());
        assert!(extract_snippets(URL, "<script>var s = '<pre>x\ny</pre>';</script>").is_empty());
    }

    #[test]
    fn split_lines_drops_blank_and_comment_lines() {
        let code = "a = 1\n\n# just a comment\nb = a + 1  # trailing\nprint('#', b)\n";
        let lines = code_lines(code);
        let texts: Vec<_> = lines.iter().map(|(_, t)| t.as_str()).collect();
        assert_eq!(texts, ["a = 1", "b = a + 1", "print('#', b)"]);
        assert_eq!(lines.iter().map(|(i, _)| *i).collect::<Vec<_>>(), [0, 3, 4]);
    }

    #[test]
    fn only_comments_gives_no_lines() {
        assert!(code_lines("# a\n   # b\n").is_empty());
    }

    #[test]
    fn prose_window_strips_markup() {
        let raw = "<h1>Top K products</h1><p>Find the <b>largest</b> products.</p><pre>x = 1\n</pre><p>Works for positives.</p>";
        let s = extract_snippets(URL, raw);
        let (before, after) = prose_window(raw, s[0].char_range, 600);
        assert_eq!(before, "Top K productsFind the largest products.");
        assert_eq!(after, "Works for positives.");
    }

    #[test]
    fn entities_round_trip_through_escape() {
        let code = "if a < b and c > d & e:\n    pass\n";
        assert_eq!(decode_entities(&escape_markup(code)), code);
        assert_eq!(decode_entities("&#65;&#x42;&amp;lt;"), "AB&lt;");
    }
}
