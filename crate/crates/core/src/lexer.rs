//! Lossless tokenizer for OverpassQL with Overpass Turbo `{{...}}` macros.
//!
//! Every byte of the input belongs to exactly one token, so joining the
//! lexemes of [`tokenize`] reproduces the input. Whitespace and comments are
//! kept as tokens; the parser skips them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Number,
    StringLiteral,
    /// A string literal in regex position (right after `~` or `!~`).
    RegexLiteral,
    Punctuation,
    TurboMacro,
    Comment,
    Whitespace,
}

impl TokenKind {
    pub fn is_trivia(self) -> bool {
        matches!(self, TokenKind::Whitespace | TokenKind::Comment)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Keyword => "keyword",
            TokenKind::Identifier => "identifier",
            TokenKind::Number => "number",
            TokenKind::StringLiteral => "string-literal",
            TokenKind::RegexLiteral => "regex-literal",
            TokenKind::Punctuation => "punctuation",
            TokenKind::TurboMacro => "turbo-macro",
            TokenKind::Comment => "comment",
            TokenKind::Whitespace => "whitespace",
        }
    }
}

/// Half-open byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

impl Token {
    pub fn is(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.kind == kind && self.lexeme == lexeme
    }

    pub fn is_punct(&self, lexeme: &str) -> bool {
        self.is(TokenKind::Punctuation, lexeme)
    }

    /// Word-like tokens: keywords and identifiers.
    pub fn is_word(&self) -> bool {
        matches!(self.kind, TokenKind::Keyword | TokenKind::Identifier)
    }

    pub fn is_string(&self) -> bool {
        matches!(self.kind, TokenKind::StringLiteral | TokenKind::RegexLiteral)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at line {line}, column {column}")]
pub struct LexError {
    pub message: String,
    pub span: Span,
    pub line: usize,
    pub column: usize,
}

pub const KEYWORDS: &[&str] = &[
    "node", "way", "rel", "relation", "area", "nwr", "nw", "nr", "wr", "derived", "out", "is_in",
    "foreach", "for", "if", "else", "complete", "retro", "compare", "convert", "make", "timeline",
    "local", "map_to_area",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

// Longest match first.
const MULTI_PUNCT: &[&str] = &["->", "!=", "!~", "::", "<<", ">>", "==", "<=", ">=", "&&", "||"];

/// Converts a byte offset into a 1-based (line, column) pair; columns count characters.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map(|i| i + 1).unwrap_or(0);
    let column = before[line_start..].chars().count() + 1;
    (line, column)
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    Lexer { text, pos: 0, tokens: Vec::new() }.run()
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn error(&self, message: impl Into<String>, start: usize) -> LexError {
        let (line, column) = line_col(self.text, start);
        LexError { message: message.into(), span: Span::new(start, self.text.len()), line, column }
    }

    fn push(&mut self, kind: TokenKind, end: usize) {
        let start = self.pos;
        self.tokens.push(Token {
            kind,
            lexeme: self.text[start..end].to_string(),
            span: Span::new(start, end),
        });
        self.pos = end;
    }

    fn previous_significant(&self) -> Option<&Token> {
        self.tokens.iter().rev().find(|t| !t.kind.is_trivia())
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        while self.pos < self.text.len() {
            let rest = self.rest();
            let c = rest.chars().next().expect("non-empty rest");
            let start = self.pos;
            if c.is_whitespace() {
                let len = rest.find(|ch: char| !ch.is_whitespace()).unwrap_or(rest.len());
                self.push(TokenKind::Whitespace, start + len);
            } else if rest.starts_with("//") {
                let len = rest.find('\n').unwrap_or(rest.len());
                self.push(TokenKind::Comment, start + len);
            } else if rest.starts_with("/*") {
                match rest[2..].find("*/") {
                    Some(i) => self.push(TokenKind::Comment, start + 2 + i + 2),
                    None => return Err(self.error("unterminated block comment", start)),
                }
            } else if rest.starts_with("{{") {
                match rest[2..].find("}}") {
                    Some(i) => self.push(TokenKind::TurboMacro, start + 2 + i + 2),
                    None => return Err(self.error("unterminated turbo macro", start)),
                }
            } else if c == '"' || c == '\'' {
                let end = scan_string(rest, c).ok_or_else(|| {
                    let what = if self.in_regex_position() { "regex" } else { "string" };
                    self.error(format!("unterminated {what} literal"), start)
                })?;
                let kind = if self.in_regex_position() {
                    TokenKind::RegexLiteral
                } else {
                    TokenKind::StringLiteral
                };
                self.push(kind, start + end);
            } else if c.is_ascii_digit() {
                self.push(TokenKind::Number, start + scan_number(rest));
            } else if c.is_alphabetic() || c == '_' {
                let len = rest
                    .find(|ch: char| !(ch.is_alphanumeric() || ch == '_'))
                    .unwrap_or(rest.len());
                let kind = if is_keyword(&rest[..len]) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                };
                self.push(kind, start + len);
            } else {
                let len = MULTI_PUNCT
                    .iter()
                    .find(|p| rest.starts_with(**p))
                    .map(|p| p.len())
                    .unwrap_or(c.len_utf8());
                self.push(TokenKind::Punctuation, start + len);
            }
        }
        Ok(self.tokens)
    }

    fn in_regex_position(&self) -> bool {
        self.previous_significant()
            .map(|t| t.is_punct("~") || t.is_punct("!~"))
            .unwrap_or(false)
    }
}

/// Returns the byte length of the quoted literal at the start of `s`.
fn scan_string(s: &str, quote: char) -> Option<usize> {
    let mut escaped = false;
    for (i, ch) in s.char_indices().skip(1) {
        if escaped {
            escaped = false;
        } else if ch == '\\' {
            escaped = true;
        } else if ch == quote {
            return Some(i + ch.len_utf8());
        }
    }
    None
}

fn scan_number(s: &str) -> usize {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    i
}

/// Strips the surrounding quotes of a string literal without unescaping.
pub fn unquote(lexeme: &str) -> &str {
    let mut chars = lexeme.chars();
    match (chars.next(), lexeme.chars().last()) {
        (Some(a), Some(b)) if lexeme.len() >= 2 && a == b && (a == '"' || a == '\'') => {
            &lexeme[1..lexeme.len() - 1]
        }
        _ => lexeme,
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?} @{}..{}", self.kind.as_str(), self.lexeme, self.span.start, self.span.end)
    }
}
