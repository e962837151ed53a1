//! Recursive-descent parser from OverpassQL text to [`QueryAst`].
//!
//! The grammar is lenient where Overpass Turbo users commonly are (unquoted
//! keys such as `addr:street`, optional `;` after the settings header and
//! after block bodies) and strict about bracket balance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::*;
use crate::lexer::{self, line_col, unquote, Span, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub column: usize,
    pub span: Span,
}

const MAX_DEPTH: usize = 200;

pub fn parse(text: &str) -> Result<QueryAst, ParseError> {
    let tokens = lexer::tokenize(text).map_err(|e| ParseError {
        message: e.message,
        line: e.line,
        column: e.column,
        span: e.span,
    })?;
    let tokens: Vec<Token> = tokens.into_iter().filter(|t| !t.kind.is_trivia()).collect();
    if tokens.is_empty() {
        return Err(ParseError { message: "empty query".into(), line: 1, column: 1, span: Span::new(0, 0) });
    }
    let mut p = Parser { text, tokens, pos: 0, depth: 0 };
    let settings = p.settings()?;
    let statements = p.statements(None)?;
    Ok(QueryAst { settings, statements })
}

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, ParseError>;

fn is_element_word(t: &Token) -> bool {
    t.is_word() && ElementType::from_word(&t.lexeme).is_some()
}

fn closer_of(open: &str) -> &'static str {
    match open {
        "(" => ")",
        "[" => "]",
        "{" => "}",
        _ => unreachable!("not an opening delimiter"),
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn peek_punct(&self, p: &str) -> bool {
        self.peek().map(|t| t.is_punct(p)).unwrap_or(false)
    }

    fn peek_word(&self, w: &str) -> bool {
        self.peek().map(|t| t.is_word() && t.lexeme == w).unwrap_or(false)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, span: Span, message: impl Into<String>) -> ParseError {
        let (line, column) = line_col(self.text, span.start);
        ParseError { message: message.into(), line, column, span }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let span = match self.peek() {
            Some(t) => t.span,
            None => Span::new(self.text.len(), self.text.len()),
        };
        self.error_at(span, message)
    }

    fn describe_current(&self) -> String {
        match self.peek() {
            Some(t) => format!("\"{}\"", t.lexeme),
            None => "end of input".to_string(),
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Token> {
        if self.peek_punct(p) {
            Ok(self.bump().expect("peeked"))
        } else {
            Err(self.error_here(format!("expected \"{p}\", found {}", self.describe_current())))
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error_here("nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    /// Source text covered by tokens `from..to` (token indices).
    fn source(&self, from: usize, to: usize) -> &'a str {
        let start = self.tokens[from].span.start;
        let end = self.tokens[to - 1].span.end;
        &self.text[start..end]
    }

    /// Consumes tokens up to (not including) a depth-0 token satisfying
    /// `stop`, checking bracket balance. Returns the token index range.
    fn balanced_until(&mut self, stop: impl Fn(&Token) -> bool) -> PResult<(usize, usize)> {
        let start = self.pos;
        let mut stack: Vec<(&'static str, Span)> = Vec::new();
        loop {
            let Some(t) = self.peek() else {
                if let Some((closer, span)) = stack.last() {
                    return Err(self.error_at(*span, format!("unclosed bracket, expected \"{closer}\"")));
                }
                return Ok((start, self.pos));
            };
            if stack.is_empty() && stop(t) {
                return Ok((start, self.pos));
            }
            if t.kind == TokenKind::Punctuation {
                match t.lexeme.as_str() {
                    "(" | "[" | "{" => stack.push((closer_of(&t.lexeme), t.span)),
                    ")" | "]" | "}" => match stack.pop() {
                        Some((closer, _)) if closer == t.lexeme => {}
                        _ => {
                            return Err(self.error_here(format!("unbalanced \"{}\"", t.lexeme)));
                        }
                    },
                    _ => {}
                }
            }
            self.pos += 1;
        }
    }

    fn joined(&self, from: usize, to: usize) -> String {
        join_lexemes(self.tokens[from..to].iter().map(|t| t.lexeme.as_str()))
    }

    /// Token text up to the matching `closer` at depth 0; consumes the closer.
    fn group_text(&mut self, closer: &'static str) -> PResult<String> {
        let (from, to) = self.balanced_until(|t| t.is_punct(closer))?;
        if self.peek().is_none() {
            return Err(self.error_here(format!("expected \"{closer}\", found end of input")));
        }
        self.pos += 1;
        Ok(self.joined(from, to))
    }

    fn settings(&mut self) -> PResult<Vec<Setting>> {
        let mut settings = Vec::new();
        while self.peek_punct("[") {
            let open = self.bump().expect("peeked");
            let name = match self.bump() {
                Some(t) if t.is_word() => t.lexeme,
                _ => return Err(self.error_at(open.span, "expected setting name after \"[\"")),
            };
            self.expect_punct(":")?;
            let (from, to) = self.balanced_until(|t| t.is_punct("]") || t.is_punct(";"))?;
            if !self.peek_punct("]") {
                return Err(self.error_at(open.span, "unclosed setting, expected \"]\""));
            }
            if from == to {
                return Err(self.error_here(format!("empty value for setting \"{name}\"")));
            }
            self.pos += 1;
            settings.push(Setting { name, value: self.joined(from, to) });
        }
        if !settings.is_empty() {
            self.eat_punct(";");
        }
        Ok(settings)
    }

    /// Parses statements until `closer` (consumed) or end of input when `closer` is None.
    fn statements(&mut self, closer: Option<&str>) -> PResult<Vec<Statement>> {
        let mut out = Vec::new();
        loop {
            match (self.peek(), closer) {
                (None, None) => return Ok(out),
                (None, Some(c)) => {
                    return Err(self.error_here(format!("expected \"{c}\", found end of input")));
                }
                (Some(t), Some(c)) if t.is_punct(c) => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => {}
            }
            if let Some(s) = self.statement()? {
                out.push(s);
            }
        }
    }

    fn statement(&mut self) -> PResult<Option<Statement>> {
        self.enter()?;
        let r = self.statement_inner();
        self.leave();
        r
    }

    fn statement_inner(&mut self) -> PResult<Option<Statement>> {
        let t = self.peek().cloned().expect("caller checked for a token");
        if t.is_punct(";") {
            self.pos += 1;
            return Ok(None);
        }
        if t.is_punct("(") {
            return self.union_or_difference().map(Some);
        }
        if t.is_punct(".") {
            return self.input_prefixed().map(Some);
        }
        if let Some(dir) = recurse_direction(&t) {
            self.pos += 1;
            return self.recurse(dir, None).map(Some);
        }
        if t.kind == TokenKind::TurboMacro {
            return self.macro_statement().map(Some);
        }
        if is_element_word(&t) {
            return self.query_statement().map(|q| Some(Statement::Query(q)));
        }
        if t.is_word() {
            return self.keyword_statement(None).map(Some);
        }
        Err(self.error_here(format!("Unknown type \"{}\"", t.lexeme)))
    }

    fn union_or_difference(&mut self) -> PResult<Statement> {
        self.expect_punct("(")?;
        let mut body = Vec::new();
        let mut minus: Option<usize> = None;
        loop {
            if self.peek().is_none() {
                return Err(self.error_here("expected \")\", found end of input"));
            }
            if self.eat_punct(")") {
                break;
            }
            if self.peek_punct("-") {
                if minus.is_some() || body.len() != 1 {
                    return Err(self.error_here("difference needs exactly one statement before \"-\""));
                }
                minus = Some(body.len());
                self.pos += 1;
                continue;
            }
            if let Some(s) = self.statement()? {
                body.push(s);
            }
        }
        let output = self.output()?;
        self.eat_punct(";");
        if minus.is_some() {
            if body.len() != 2 {
                return Err(self.error_here("difference needs exactly one statement after \"-\""));
            }
            let right = body.pop().expect("two statements");
            let left = body.pop().expect("two statements");
            return Ok(Statement::Difference { left: Box::new(left), right: Box::new(right), output });
        }
        Ok(Statement::Union { body, output })
    }

    fn set_name(&mut self) -> PResult<SetName> {
        self.expect_punct(".")?;
        match self.bump() {
            Some(t) if t.is_word() || t.kind == TokenKind::Number => Ok(t.lexeme),
            _ => {
                self.pos -= 1;
                Err(self.error_here(format!("expected set name after \".\", found {}", self.describe_current())))
            }
        }
    }

    fn optional_set(&mut self) -> PResult<Option<SetName>> {
        if self.peek_punct(".") {
            self.set_name().map(Some)
        } else {
            Ok(None)
        }
    }

    fn output(&mut self) -> PResult<Option<SetName>> {
        if self.eat_punct("->") {
            self.set_name().map(Some)
        } else {
            Ok(None)
        }
    }

    fn end_statement(&mut self) -> PResult<()> {
        if self.eat_punct(";") {
            Ok(())
        } else {
            Err(self.error_here(format!("expected \";\", found {}", self.describe_current())))
        }
    }

    fn input_prefixed(&mut self) -> PResult<Statement> {
        let set = self.set_name()?;
        let Some(t) = self.peek().cloned() else {
            return Err(self.error_here("expected \";\", found end of input"));
        };
        if t.is_punct(";") || t.is_punct("->") {
            let output = self.output()?;
            self.end_statement()?;
            return Ok(Statement::Item { set, output });
        }
        if let Some(dir) = recurse_direction(&t) {
            self.pos += 1;
            return self.recurse(dir, Some(set));
        }
        if t.is_word() && !is_element_word(&t) {
            return self.keyword_statement(Some(set));
        }
        Err(self.error_here(format!("unexpected {} after input set", self.describe_current())))
    }

    fn recurse(&mut self, direction: RecurseDirection, input: Option<SetName>) -> PResult<Statement> {
        let output = self.output()?;
        self.end_statement()?;
        Ok(Statement::Recurse { direction, input, output })
    }

    fn macro_statement(&mut self) -> PResult<Statement> {
        let t = self.bump().expect("peeked macro");
        let m = TurboMacro::from_lexeme(&t.lexeme);
        let is_query = match self.peek() {
            Some(n) => n.is_punct("->") || n.is_punct(";") || n.is_punct("(") || n.is_punct("[") || n.is_punct("."),
            None => false,
        };
        if !is_query || m.name == "style" || m.name.contains('=') {
            let terminated = self.eat_punct(";");
            return Ok(Statement::Opaque { text: t.lexeme, terminated });
        }
        let filters = self.filters()?;
        let output = self.output()?;
        self.end_statement()?;
        Ok(Statement::Query(QueryStatement { target: QueryTarget::Macro(m), filters, output }))
    }

    fn query_statement(&mut self) -> PResult<QueryStatement> {
        let t = self.bump().expect("peeked element type");
        let kind = ElementType::from_word(&t.lexeme).expect("checked element word");
        let filters = self.filters()?;
        let output = self.output()?;
        self.end_statement()?;
        Ok(QueryStatement { target: QueryTarget::Element(kind), filters, output })
    }

    fn filters(&mut self) -> PResult<Vec<Filter>> {
        let mut filters = Vec::new();
        loop {
            if self.peek_punct(".") {
                filters.push(Filter::ByInputSet { set: self.set_name()? });
            } else if self.peek_punct("[") {
                filters.push(Filter::ByTag(self.tag_filter()?));
            } else if self.peek_punct("(") {
                filters.push(self.paren_filter()?);
            } else {
                return Ok(filters);
            }
        }
    }

    /// Collects the text of a key or value inside `[...]` up to a depth-0 token
    /// satisfying `stop`. A single string literal is unquoted; anything else is
    /// taken verbatim from the source.
    fn tag_text(&mut self, open: Span, stop: impl Fn(&Token) -> bool) -> PResult<String> {
        let from = self.pos;
        loop {
            match self.peek() {
                None => return Err(self.error_at(open, "unclosed tag filter, expected \"]\"")),
                Some(t) if stop(t) => break,
                Some(t) if t.is_punct(";") || t.is_punct("[") || t.is_punct("(") || t.is_punct(")") => {
                    return Err(self.error_here(format!("unexpected \"{}\" in tag filter", t.lexeme)));
                }
                Some(_) => self.pos += 1,
            }
        }
        let to = self.pos;
        if from == to {
            return Err(self.error_here(format!("expected key or value in tag filter, found {}", self.describe_current())));
        }
        if to - from == 1 && self.tokens[from].is_string() {
            return Ok(unquote(&self.tokens[from].lexeme).to_string());
        }
        Ok(self.source(from, to).to_string())
    }

    fn case_flag(&mut self, open: Span) -> PResult<bool> {
        if self.eat_punct(",") {
            match self.bump() {
                Some(t) if t.is_word() && t.lexeme == "i" => Ok(false),
                _ => Err(self.error_at(open, "expected \"i\" after \",\" in tag filter")),
            }
        } else {
            Ok(true)
        }
    }

    fn tag_filter(&mut self) -> PResult<TagFilter> {
        let open = self.expect_punct("[")?.span;
        let is_op = |t: &Token| {
            t.is_punct("=") || t.is_punct("!=") || t.is_punct("~") || t.is_punct("!~") || t.is_punct("]")
        };
        let filter = if self.eat_punct("!") {
            let key = self.tag_text(open, |t| t.is_punct("]"))?;
            TagFilter { key, matcher: TagMatcher::NotExists }
        } else if self.eat_punct("~") {
            let pattern = self.tag_text(open, |t| t.is_punct("~"))?;
            self.expect_punct("~")?;
            let value_pattern = self.tag_text(open, |t| t.is_punct("]") || t.is_punct(","))?;
            let case_sensitive = self.case_flag(open)?;
            TagFilter {
                key: pattern.clone(),
                matcher: TagMatcher::KeyRegex { pattern, value_pattern, case_sensitive },
            }
        } else {
            let key = self.tag_text(open, is_op)?;
            let op = self.bump().expect("stopped at operator");
            let value_stop = |t: &Token| t.is_punct("]") || t.is_punct(",");
            let matcher = match op.lexeme.as_str() {
                "]" => {
                    self.pos -= 1;
                    TagMatcher::Exists
                }
                "=" => TagMatcher::Equals { value: self.tag_text(open, value_stop)? },
                "!=" => TagMatcher::NotEquals { value: self.tag_text(open, value_stop)? },
                "~" | "!~" => {
                    let value = self.tag_text(open, value_stop)?;
                    let case_sensitive = self.case_flag(open)?;
                    TagMatcher::Regex { value, case_sensitive, negated: op.lexeme == "!~" }
                }
                _ => unreachable!("is_op"),
            };
            TagFilter { key, matcher }
        };
        if !self.eat_punct("]") {
            return Err(self.error_here(format!("expected \"]\", found {}", self.describe_current())));
        }
        Ok(filter)
    }

    /// A possibly signed number, or a turbo macro standing in for one.
    fn number_item(&mut self) -> PResult<String> {
        let neg = self.eat_punct("-");
        match self.bump() {
            Some(t) if t.kind == TokenKind::Number => Ok(if neg { format!("-{}", t.lexeme) } else { t.lexeme }),
            Some(t) if t.kind == TokenKind::TurboMacro && !neg => Ok(t.lexeme),
            _ => {
                self.pos -= 1;
                Err(self.error_here(format!("expected number, found {}", self.describe_current())))
            }
        }
    }

    fn number_list(&mut self) -> PResult<Vec<String>> {
        let mut items = vec![self.number_item()?];
        while self.eat_punct(",") {
            items.push(self.number_item()?);
        }
        Ok(items)
    }

    fn text_item(&mut self) -> PResult<String> {
        match self.bump() {
            Some(t) if t.is_string() => Ok(unquote(&t.lexeme).to_string()),
            Some(t) if t.is_word() || t.kind == TokenKind::Number || t.kind == TokenKind::TurboMacro => Ok(t.lexeme),
            _ => {
                self.pos -= 1;
                Err(self.error_here(format!("expected string, found {}", self.describe_current())))
            }
        }
    }

    fn text_list(&mut self) -> PResult<Vec<String>> {
        let mut items = vec![self.text_item()?];
        while self.eat_punct(",") {
            items.push(self.text_item()?);
        }
        Ok(items)
    }

    fn paren_filter(&mut self) -> PResult<Filter> {
        let open = self.expect_punct("(")?;
        let start = self.pos;
        let first = self.peek().cloned().ok_or_else(|| self.error_at(open.span, "unclosed \"(\""))?;
        let colon_next = self.peek_at(1).map(|t| t.is_punct(":")).unwrap_or(false);
        let word = if first.is_word() { Some(first.lexeme.as_str()) } else { None };

        let filter = match word {
            _ if first.kind == TokenKind::TurboMacro
                && self.peek_at(1).map(|t| t.is_punct(")")).unwrap_or(false) =>
            {
                self.pos += 1;
                let m = TurboMacro::from_lexeme(&first.lexeme);
                if m.kind == MacroKind::Bbox {
                    Filter::BoundingBox { bbox: BboxSpec::Macro(m) }
                } else {
                    Filter::Opaque { text: first.lexeme.clone() }
                }
            }
            _ if first.kind == TokenKind::Number || first.is_punct("-") || first.kind == TokenKind::TurboMacro => {
                let items = self.number_list()?;
                match items.len() {
                    1 => Filter::ByElementId { ids: items, prefixed: false },
                    4 => {
                        let coords: [String; 4] = items.try_into().expect("four items");
                        Filter::BoundingBox { bbox: BboxSpec::Coords(coords) }
                    }
                    n => {
                        return Err(self.error_at(open.span, format!("expected 1 id or 4 bbox coordinates, found {n} numbers")));
                    }
                }
            }
            Some("area") => {
                self.pos += 1;
                let set = self.optional_set()?;
                let id = if self.eat_punct(":") { Some(self.number_item()?) } else { None };
                Filter::ByArea { set, id }
            }
            Some("pivot") => {
                self.pos += 1;
                Filter::AreaPivot { set: self.optional_set()? }
            }
            Some("id") if colon_next => {
                self.pos += 2;
                Filter::ByElementId { ids: self.number_list()?, prefixed: true }
            }
            Some("around") => {
                self.pos += 1;
                let set = self.optional_set()?;
                self.expect_punct(":")?;
                let radius = self.number_item()?;
                let mut points = Vec::new();
                while self.eat_punct(",") {
                    points.push(self.number_item()?);
                }
                Filter::Around { set, radius, points }
            }
            Some("poly") if colon_next => {
                self.pos += 2;
                Filter::ByPolygon { polygon: self.text_item()? }
            }
            Some("newer") if colon_next => {
                self.pos += 2;
                Filter::Newer { date: self.text_item()? }
            }
            Some("changed") => {
                self.pos += 1;
                let dates = if self.eat_punct(":") { self.text_list()? } else { Vec::new() };
                Filter::ByDateOfChange { dates }
            }
            Some(w) if UserFilterKind::from_word(w).is_some() && colon_next => {
                let kind = UserFilterKind::from_word(w).expect("checked");
                self.pos += 2;
                Filter::ByUser { kind, names: self.text_list()? }
            }
            Some(w) if RecurseFilterKind::from_word(w).is_some() => {
                let kind = RecurseFilterKind::from_word(w).expect("checked");
                self.pos += 1;
                let set = self.optional_set()?;
                let role = if self.eat_punct(":") { Some(self.text_item()?) } else { None };
                Filter::RecurseBy { kind, set, role }
            }
            Some(w @ ("way_cnt" | "way_link")) => {
                let kind = w.to_string();
                self.pos += 1;
                let set = self.optional_set()?;
                self.expect_punct(":")?;
                let (from, to) = self.balanced_until(|t| t.is_punct(")"))?;
                Filter::ByWayCount { kind, set, range: self.joined(from, to) }
            }
            Some("if") if colon_next => {
                self.pos += 2;
                let (from, to) = self.balanced_until(|t| t.is_punct(")"))?;
                if from == to {
                    return Err(self.error_here("empty condition in \"if:\" filter"));
                }
                Filter::Conditional { expression: self.joined(from, to) }
            }
            _ => {
                let (from, to) = self.balanced_until(|t| t.is_punct(")") || t.is_punct(";"))?;
                if from == to {
                    return Err(self.error_here(format!("unexpected {} in filter", self.describe_current())));
                }
                Filter::Opaque { text: self.joined(from, to) }
            }
        };
        if !self.eat_punct(")") {
            if self.pos == start {
                return Err(self.error_here("unclosed \"(\""));
            }
            return Err(self.error_here(format!("expected \")\", found {}", self.describe_current())));
        }
        Ok(filter)
    }

    fn body(&mut self) -> PResult<Vec<Statement>> {
        let body = if self.eat_punct("{") {
            self.statements(Some("}"))?
        } else if self.eat_punct("(") {
            self.statements(Some(")"))?
        } else {
            return Err(self.error_here(format!("expected block, found {}", self.describe_current())));
        };
        self.eat_punct(";");
        Ok(body)
    }

    fn paren_text(&mut self) -> PResult<String> {
        self.expect_punct("(")?;
        self.group_text(")")
    }

    /// Token text up to a depth-0 `;` or `->`; neither is consumed.
    fn rest_of_statement(&mut self) -> PResult<String> {
        let (from, to) = self.balanced_until(|t| t.is_punct(";") || t.is_punct("->"))?;
        Ok(self.joined(from, to))
    }

    fn keyword_statement(&mut self, input: Option<SetName>) -> PResult<Statement> {
        let kw = self.bump().expect("peeked keyword");
        let suffix_input = |p: &mut Self, input: Option<SetName>| -> PResult<Option<SetName>> {
            match input {
                Some(i) => Ok(Some(i)),
                None => p.optional_set(),
            }
        };
        match kw.lexeme.as_str() {
            "out" => {
                let mut params: Vec<String> = Vec::new();
                while !self.peek_punct(";") {
                    let Some(t) = self.peek().cloned() else {
                        return Err(self.error_here("expected \";\", found end of input"));
                    };
                    if t.is_punct("(") {
                        let inner = self.paren_text()?;
                        match params.last_mut() {
                            Some(last) => *last = format!("{last} ( {inner} )"),
                            None => params.push(format!("( {inner} )")),
                        }
                    } else if t.is_word() || t.kind == TokenKind::Number {
                        self.pos += 1;
                        params.push(t.lexeme);
                    } else {
                        return Err(self.error_here(format!("unexpected \"{}\" in out statement", t.lexeme)));
                    }
                }
                self.pos += 1;
                Ok(Statement::Out { input, params })
            }
            "is_in" => {
                let coords = if self.peek_punct("(") { Some(self.paren_text()?) } else { None };
                let output = self.output()?;
                self.end_statement()?;
                Ok(Statement::IsIn { input, coords, output })
            }
            "local" => {
                let mode = match self.peek() {
                    Some(t) if t.is_word() => {
                        let m = t.lexeme.clone();
                        self.pos += 1;
                        Some(m)
                    }
                    _ => None,
                };
                let output = self.output()?;
                self.end_statement()?;
                Ok(Statement::Local { input, mode, output })
            }
            "foreach" => {
                let input = suffix_input(self, input)?;
                let output = self.output()?;
                let body = self.body()?;
                Ok(Statement::ForEach { input, output, body })
            }
            "complete" => {
                let input = suffix_input(self, input)?;
                let output = self.output()?;
                let body = self.body()?;
                Ok(Statement::Complete { input, output, body })
            }
            "for" => {
                let input = suffix_input(self, input)?;
                let output = self.output()?;
                let key = self.paren_text()?;
                let body = self.body()?;
                Ok(Statement::For { input, output, key, body })
            }
            "retro" => {
                let condition = self.paren_text()?;
                let body = self.body()?;
                Ok(Statement::Retro { condition, body })
            }
            "compare" => {
                let input = suffix_input(self, input)?;
                let output = self.output()?;
                let args = if self.peek_punct("(") { Some(self.paren_text()?) } else { None };
                let body = if self.peek_punct("{") {
                    Some(self.body()?)
                } else {
                    self.end_statement()?;
                    None
                };
                Ok(Statement::Compare { input, output, args, body })
            }
            "if" => {
                let condition = self.paren_text()?;
                let then_body = self.body()?;
                let else_body = if self.peek_word("else") {
                    self.pos += 1;
                    Some(self.body()?)
                } else {
                    None
                };
                Ok(Statement::If { condition, then_body, else_body })
            }
            "convert" | "make" => {
                let element_type = match self.bump() {
                    Some(t) if t.is_word() => t.lexeme,
                    _ => {
                        self.pos -= 1;
                        return Err(self.error_here(format!("expected element type after \"{}\"", kw.lexeme)));
                    }
                };
                let body = self.rest_of_statement()?;
                let output = self.output()?;
                self.end_statement()?;
                Ok(if kw.lexeme == "convert" {
                    Statement::Convert { input, element_type, body, output }
                } else {
                    Statement::Make { input, element_type, body, output }
                })
            }
            "timeline" => {
                let args = self.paren_text()?;
                let output = self.output()?;
                self.end_statement()?;
                Ok(Statement::Timeline { args, output })
            }
            _ => {
                // Unknown statement: keep its text as long as it is well bracketed.
                self.pos -= 1;
                let (from, to) = self.balanced_until(|t| t.is_punct(";"))?;
                let mut text = self.joined(from, to);
                if let Some(i) = input {
                    text = format!(". {i} {text}");
                }
                let terminated = self.eat_punct(";");
                Ok(Statement::Opaque { text, terminated })
            }
        }
    }
}

fn recurse_direction(t: &Token) -> Option<RecurseDirection> {
    if t.kind != TokenKind::Punctuation {
        return None;
    }
    Some(match t.lexeme.as_str() {
        ">" => RecurseDirection::Down,
        ">>" => RecurseDirection::DownRelations,
        "<" => RecurseDirection::Up,
        "<<" => RecurseDirection::UpRelations,
        _ => return None,
    })
}
