//! Abstract syntax for OverpassQL queries.
//!
//! Spans are not stored in the tree: two ASTs are equal when they describe
//! the same query structure, regardless of layout or comments.

use std::fmt;

use serde::{Deserialize, Serialize};

pub type SetName = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MacroKind {
    Bbox,
    GeocodeArea,
    GeocodeCoords,
    GeocodeId,
    Other,
}

/// An Overpass Turbo `{{...}}` shortcut.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TurboMacro {
    pub kind: MacroKind,
    /// Macro name as written, e.g. `geocodeArea`, `center`, `date`.
    pub name: String,
    /// Argument with surrounding quotes removed, e.g. `Troms`.
    pub argument: Option<String>,
    /// Full source text including the braces.
    pub raw: String,
}

impl TurboMacro {
    pub fn from_lexeme(raw: &str) -> Self {
        let inner = raw
            .strip_prefix("{{")
            .and_then(|s| s.strip_suffix("}}"))
            .unwrap_or(raw)
            .trim();
        let (name, argument) = match inner.split_once(':') {
            Some((n, a)) if !n.contains('=') => {
                (n.trim().to_string(), Some(strip_quotes(a.trim()).to_string()))
            }
            _ => (inner.to_string(), None),
        };
        let kind = match (name.as_str(), &argument) {
            ("bbox", None) => MacroKind::Bbox,
            ("geocodeArea", Some(_)) => MacroKind::GeocodeArea,
            ("geocodeCoords", Some(_)) => MacroKind::GeocodeCoords,
            ("geocodeId", Some(_)) => MacroKind::GeocodeId,
            _ => MacroKind::Other,
        };
        TurboMacro { kind, name, argument, raw: raw.to_string() }
    }
}

fn strip_quotes(s: &str) -> &str {
    crate::lexer::unquote(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum TagMatcher {
    Exists,
    NotExists,
    Equals { value: String },
    NotEquals { value: String },
    Regex { value: String, case_sensitive: bool, negated: bool },
    /// `[~"key pattern"~"value pattern"]`; the key pattern is also stored as the filter key.
    KeyRegex { pattern: String, value_pattern: String, case_sensitive: bool },
}

/// Key/value condition in square brackets. Keys and values are stored as
/// written between the quotes, escapes untouched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagFilter {
    pub key: String,
    pub matcher: TagMatcher,
}

impl TagFilter {
    /// Value text for matchers that carry one.
    pub fn value(&self) -> Option<&str> {
        match &self.matcher {
            TagMatcher::Exists | TagMatcher::NotExists => None,
            TagMatcher::Equals { value }
            | TagMatcher::NotEquals { value }
            | TagMatcher::Regex { value, .. } => Some(value),
            TagMatcher::KeyRegex { value_pattern, .. } => Some(value_pattern),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BboxSpec {
    /// south, west, north, east as written.
    Coords([String; 4]),
    Macro(TurboMacro),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurseFilterKind {
    N,
    W,
    R,
    Bn,
    Bw,
    Br,
}

impl RecurseFilterKind {
    pub fn from_word(word: &str) -> Option<Self> {
        Some(match word {
            "n" => Self::N,
            "w" => Self::W,
            "r" => Self::R,
            "bn" => Self::Bn,
            "bw" => Self::Bw,
            "br" => Self::Br,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::W => "w",
            Self::R => "r",
            Self::Bn => "bn",
            Self::Bw => "bw",
            Self::Br => "br",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserFilterKind {
    User,
    Uid,
    UserTouched,
    UidTouched,
}

impl UserFilterKind {
    pub fn from_word(word: &str) -> Option<Self> {
        Some(match word {
            "user" => Self::User,
            "uid" => Self::Uid,
            "user_touched" => Self::UserTouched,
            "uid_touched" => Self::UidTouched,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::User => "user",
            Self::Uid => "uid",
            Self::UserTouched => "user_touched",
            Self::UidTouched => "uid_touched",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "filter", rename_all = "kebab-case")]
pub enum Filter {
    ByTag(TagFilter),
    BoundingBox { bbox: BboxSpec },
    /// `(area)`, `(area.a)` or `(area:3600062422)`.
    ByArea { set: Option<SetName>, id: Option<String> },
    AreaPivot { set: Option<SetName> },
    /// `.a` directly on a query statement.
    ByInputSet { set: SetName },
    /// `(123)` or `(id:1,2,3)`.
    ByElementId { ids: Vec<String>, prefixed: bool },
    /// `(around.a:500)` or `(around:500,lat,lon,...)`.
    Around { set: Option<SetName>, radius: String, points: Vec<String> },
    ByPolygon { polygon: String },
    Newer { date: String },
    ByDateOfChange { dates: Vec<String> },
    ByUser { kind: UserFilterKind, names: Vec<String> },
    RecurseBy { kind: RecurseFilterKind, set: Option<SetName>, role: Option<String> },
    /// `(way_cnt:1-2)` / `(way_link:3-)`.
    ByWayCount { kind: String, set: Option<SetName>, range: String },
    /// `(if: <evaluator>)`; the evaluator is kept as normalized token text.
    Conditional { expression: String },
    /// Unrecognized but well-bracketed `( ... )` content.
    Opaque { text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    Node,
    Way,
    Relation,
    Nwr,
    Nw,
    Nr,
    Wr,
    Area,
    Derived,
}

impl ElementType {
    pub fn from_word(word: &str) -> Option<Self> {
        Some(match word {
            "node" => Self::Node,
            "way" => Self::Way,
            "rel" | "relation" => Self::Relation,
            "nwr" => Self::Nwr,
            "nw" => Self::Nw,
            "nr" => Self::Nr,
            "wr" => Self::Wr,
            "area" => Self::Area,
            "derived" => Self::Derived,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Node => "node",
            Self::Way => "way",
            Self::Relation => "relation",
            Self::Nwr => "nwr",
            Self::Nw => "nw",
            Self::Nr => "nr",
            Self::Wr => "wr",
            Self::Area => "area",
            Self::Derived => "derived",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryTarget {
    Element(ElementType),
    /// A macro standing for a whole query, e.g. `{{geocodeArea:"Troms"}}`.
    Macro(TurboMacro),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryStatement {
    pub target: QueryTarget,
    pub filters: Vec<Filter>,
    pub output: Option<SetName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecurseDirection {
    /// `>`
    Down,
    /// `>>`
    DownRelations,
    /// `<`
    Up,
    /// `<<`
    UpRelations,
}

impl RecurseDirection {
    pub fn symbol(self) -> &'static str {
        match self {
            Self::Down => ">",
            Self::DownRelations => ">>",
            Self::Up => "<",
            Self::UpRelations => "<<",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "statement", rename_all = "kebab-case")]
pub enum Statement {
    Query(QueryStatement),
    Union { body: Vec<Statement>, output: Option<SetName> },
    Difference { left: Box<Statement>, right: Box<Statement>, output: Option<SetName> },
    If { condition: String, then_body: Vec<Statement>, else_body: Option<Vec<Statement>> },
    For { input: Option<SetName>, output: Option<SetName>, key: String, body: Vec<Statement> },
    ForEach { input: Option<SetName>, output: Option<SetName>, body: Vec<Statement> },
    Complete { input: Option<SetName>, output: Option<SetName>, body: Vec<Statement> },
    Retro { condition: String, body: Vec<Statement> },
    Compare {
        input: Option<SetName>,
        output: Option<SetName>,
        args: Option<String>,
        body: Option<Vec<Statement>>,
    },
    Out { input: Option<SetName>, params: Vec<String> },
    Recurse { direction: RecurseDirection, input: Option<SetName>, output: Option<SetName> },
    IsIn { input: Option<SetName>, coords: Option<String>, output: Option<SetName> },
    Item { set: SetName, output: Option<SetName> },
    Convert { input: Option<SetName>, element_type: String, body: String, output: Option<SetName> },
    Make { input: Option<SetName>, element_type: String, body: String, output: Option<SetName> },
    Timeline { args: String, output: Option<SetName> },
    Local { input: Option<SetName>, mode: Option<String>, output: Option<SetName> },
    /// Unrecognized statement kept as normalized token text. `terminated`
    /// records whether it ended with `;`.
    Opaque { text: String, terminated: bool },
}

/// A header setting such as `[timeout:25]`; the value is normalized token text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryAst {
    pub settings: Vec<Setting>,
    pub statements: Vec<Statement>,
}

impl QueryAst {
    pub fn setting(&self, name: &str) -> Option<&str> {
        self.settings.iter().find(|s| s.name == name).map(|s| s.value.as_str())
    }

    /// Output format named by the `[out:...]` setting; Overpass defaults to xml.
    pub fn output_format(&self) -> &str {
        self.setting("out")
            .map(|v| if v.starts_with("csv") { "csv" } else { v })
            .unwrap_or("xml")
    }

    /// Canonical compact serialization; re-parsing it yields an equal AST.
    pub fn to_query_string(&self) -> String {
        let mut w = Writer { out: String::new(), template: false };
        w.ast(self);
        w.out
    }

    /// Serialization with identifiers, set names, digits and macro arguments
    /// replaced by placeholders.
    pub fn to_template_string(&self) -> String {
        let mut w = Writer { out: String::new(), template: true };
        w.ast(self);
        w.out
    }

    /// Depth-first pre-order walk over every statement, including nested ones.
    pub fn walk_statements<'a>(&'a self, visit: &mut dyn FnMut(&'a Statement)) {
        fn go<'a>(stmts: &'a [Statement], visit: &mut dyn FnMut(&'a Statement)) {
            for s in stmts {
                visit(s);
                for child in s.children() {
                    go(child, visit);
                }
            }
        }
        go(&self.statements, visit);
    }

    pub fn filters(&self) -> Vec<&Filter> {
        let mut out = Vec::new();
        self.walk_statements(&mut |s| {
            if let Statement::Query(q) = s {
                out.extend(q.filters.iter());
            }
        });
        out
    }

    pub fn tag_filters(&self) -> Vec<&TagFilter> {
        self.filters()
            .into_iter()
            .filter_map(|f| match f {
                Filter::ByTag(t) => Some(t),
                _ => None,
            })
            .collect()
    }
}

impl Statement {
    /// Nested statement lists, in source order.
    pub fn children(&self) -> Vec<&[Statement]> {
        match self {
            Statement::Union { body, .. }
            | Statement::For { body, .. }
            | Statement::ForEach { body, .. }
            | Statement::Complete { body, .. }
            | Statement::Retro { body, .. } => vec![body.as_slice()],
            Statement::Difference { left, right, .. } => {
                vec![std::slice::from_ref(left.as_ref()), std::slice::from_ref(right.as_ref())]
            }
            Statement::If { then_body, else_body, .. } => {
                let mut v = vec![then_body.as_slice()];
                if let Some(e) = else_body {
                    v.push(e.as_slice());
                }
                v
            }
            Statement::Compare { body: Some(body), .. } => vec![body.as_slice()],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_query_string())
    }
}

pub const KEY_PLACEHOLDER: &str = "⟨K⟩";
pub const VALUE_PLACEHOLDER: &str = "⟨V⟩";
pub const SET_PLACEHOLDER: &str = "⟨S⟩";
pub const NUMBER_PLACEHOLDER: &str = "⟨N⟩";
pub const ARGUMENT_PLACEHOLDER: &str = "⟨A⟩";

/// Replaces every maximal run of ASCII digits by the number placeholder.
pub fn mask_digits(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_digits = false;
    for ch in text.chars() {
        if ch.is_ascii_digit() {
            if !in_digits {
                out.push_str(NUMBER_PLACEHOLDER);
                in_digits = true;
            }
        } else {
            in_digits = false;
            out.push(ch);
        }
    }
    out
}

/// Masks string literals (as value placeholders) and digits in normalized
/// token text such as evaluator expressions.
pub fn mask_token_text(text: &str) -> String {
    match crate::lexer::tokenize(text) {
        Ok(tokens) => tokens
            .iter()
            .map(|t| {
                if t.is_string() {
                    VALUE_PLACEHOLDER.to_string()
                } else if t.kind == crate::lexer::TokenKind::TurboMacro {
                    mask_macro(&TurboMacro::from_lexeme(&t.lexeme))
                } else {
                    mask_digits(&t.lexeme)
                }
            })
            .collect(),
        Err(_) => mask_digits(text),
    }
}

fn mask_macro(m: &TurboMacro) -> String {
    match &m.argument {
        Some(_) => format!("{{{{{}:{}}}}}", m.name, ARGUMENT_PLACEHOLDER),
        None => format!("{{{{{}}}}}", mask_digits(&m.name)),
    }
}

/// Quotes raw string content, picking a quote character that keeps it intact.
pub fn quote(raw: &str) -> String {
    let mut escaped = false;
    let mut has_bare_double = false;
    for ch in raw.chars() {
        if escaped {
            escaped = false;
        } else if ch == '\\' {
            escaped = true;
        } else if ch == '"' {
            has_bare_double = true;
        }
    }
    if has_bare_double {
        format!("'{raw}'")
    } else {
        format!("\"{raw}\"")
    }
}

struct Writer {
    out: String,
    template: bool,
}

impl Writer {
    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn key(&mut self, key: &str) {
        if self.template {
            self.push(KEY_PLACEHOLDER);
        } else {
            let q = quote(key);
            self.push(&q);
        }
    }

    fn value(&mut self, value: &str) {
        if self.template {
            self.push(VALUE_PLACEHOLDER);
        } else {
            let q = quote(value);
            self.push(&q);
        }
    }

    /// A string-literal argument whose digits are masked in template mode.
    fn literal(&mut self, value: &str) {
        let q = quote(value);
        if self.template {
            let m = mask_digits(&q);
            self.push(&m);
        } else {
            self.push(&q);
        }
    }

    fn number(&mut self, n: &str) {
        if self.template {
            if n.starts_with("{{") {
                let m = mask_macro(&TurboMacro::from_lexeme(n));
                self.push(&m);
            } else {
                let m = mask_digits(n);
                self.push(&m);
            }
        } else {
            self.push(n);
        }
    }

    fn tokens_text(&mut self, text: &str) {
        if self.template {
            let m = mask_token_text(text);
            self.push(&m);
        } else {
            self.push(text);
        }
    }

    fn set(&mut self, name: &str) {
        self.push(".");
        if self.template {
            self.push(SET_PLACEHOLDER);
        } else {
            self.push(name);
        }
    }

    fn output(&mut self, output: &Option<SetName>) {
        if let Some(name) = output {
            self.push("->");
            self.set(name);
        }
    }

    fn macro_(&mut self, m: &TurboMacro) {
        if self.template {
            let s = mask_macro(m);
            self.push(&s);
        } else {
            self.push(&m.raw);
        }
    }

    fn ast(&mut self, ast: &QueryAst) {
        for s in &ast.settings {
            self.push("[");
            self.push(&s.name);
            self.push(":");
            self.tokens_text(&s.value);
            self.push("]");
        }
        if !ast.settings.is_empty() {
            self.push(";");
        }
        self.block(&ast.statements);
    }

    fn block(&mut self, stmts: &[Statement]) {
        for s in stmts {
            self.statement(s);
        }
    }

    fn braced(&mut self, stmts: &[Statement]) {
        self.push("{");
        self.block(stmts);
        self.push("}");
    }

    fn input_prefix(&mut self, input: &Option<SetName>) {
        if let Some(name) = input {
            self.set(name);
            self.push(" ");
        }
    }

    fn statement(&mut self, stmt: &Statement) {
        match stmt {
            Statement::Query(q) => {
                self.query(q);
                self.push(";");
            }
            Statement::Union { body, output } => {
                self.push("(");
                self.block(body);
                self.push(")");
                self.output(output);
                self.push(";");
            }
            Statement::Difference { left, right, output } => {
                self.push("(");
                self.statement(left);
                self.push("-");
                self.statement(right);
                self.push(")");
                self.output(output);
                self.push(";");
            }
            Statement::If { condition, then_body, else_body } => {
                self.push("if(");
                self.tokens_text(condition);
                self.push(")");
                self.braced(then_body);
                if let Some(e) = else_body {
                    self.push("else");
                    self.braced(e);
                }
            }
            Statement::For { input, output, key, body } => {
                self.push("for");
                if let Some(i) = input {
                    self.set(i);
                }
                self.output(output);
                self.push("(");
                self.tokens_text(key);
                self.push(")");
                self.braced(body);
            }
            Statement::ForEach { input, output, body } => {
                self.push("foreach");
                if let Some(i) = input {
                    self.set(i);
                }
                self.output(output);
                self.braced(body);
            }
            Statement::Complete { input, output, body } => {
                self.push("complete");
                if let Some(i) = input {
                    self.set(i);
                }
                self.output(output);
                self.braced(body);
            }
            Statement::Retro { condition, body } => {
                self.push("retro(");
                self.tokens_text(condition);
                self.push(")");
                self.braced(body);
            }
            Statement::Compare { input, output, args, body } => {
                self.push("compare");
                if let Some(i) = input {
                    self.set(i);
                }
                self.output(output);
                if let Some(a) = args {
                    self.push("(");
                    self.tokens_text(a);
                    self.push(")");
                }
                match body {
                    Some(b) => self.braced(b),
                    None => self.push(";"),
                }
            }
            Statement::Out { input, params } => {
                self.input_prefix(input);
                self.push("out");
                for p in params {
                    self.push(" ");
                    self.tokens_text(p);
                }
                self.push(";");
            }
            Statement::Recurse { direction, input, output } => {
                self.input_prefix(input);
                self.push(direction.symbol());
                self.output(output);
                self.push(";");
            }
            Statement::IsIn { input, coords, output } => {
                self.input_prefix(input);
                self.push("is_in");
                if let Some(c) = coords {
                    self.push("(");
                    self.tokens_text(c);
                    self.push(")");
                }
                self.output(output);
                self.push(";");
            }
            Statement::Item { set, output } => {
                self.set(set);
                self.output(output);
                self.push(";");
            }
            Statement::Convert { input, element_type, body, output }
            | Statement::Make { input, element_type, body, output } => {
                self.input_prefix(input);
                let kw = if matches!(stmt, Statement::Convert { .. }) { "convert " } else { "make " };
                self.push(kw);
                self.push(element_type);
                if !body.is_empty() {
                    self.push(" ");
                    self.tokens_text(body);
                }
                self.output(output);
                self.push(";");
            }
            Statement::Timeline { args, output } => {
                self.push("timeline(");
                self.tokens_text(args);
                self.push(")");
                self.output(output);
                self.push(";");
            }
            Statement::Local { input, mode, output } => {
                self.input_prefix(input);
                self.push("local");
                if let Some(m) = mode {
                    self.push(" ");
                    self.push(m);
                }
                self.output(output);
                self.push(";");
            }
            Statement::Opaque { text, terminated } => {
                self.tokens_text(text);
                if *terminated {
                    self.push(";");
                } else {
                    self.push(" ");
                }
            }
        }
    }

    fn query(&mut self, q: &QueryStatement) {
        match &q.target {
            QueryTarget::Element(t) => self.push(t.as_str()),
            QueryTarget::Macro(m) => self.macro_(m),
        }
        for f in &q.filters {
            self.filter(f);
        }
        self.output(&q.output);
    }

    fn filter(&mut self, f: &Filter) {
        match f {
            Filter::ByTag(t) => self.tag(t),
            Filter::ByInputSet { set } => self.set(set),
            other => {
                self.push("(");
                self.paren_filter(other);
                self.push(")");
            }
        }
    }

    fn tag(&mut self, t: &TagFilter) {
        self.push("[");
        match &t.matcher {
            TagMatcher::Exists => self.key(&t.key),
            TagMatcher::NotExists => {
                self.push("!");
                self.key(&t.key);
            }
            TagMatcher::Equals { value } => {
                self.key(&t.key);
                self.push("=");
                self.value(value);
            }
            TagMatcher::NotEquals { value } => {
                self.key(&t.key);
                self.push("!=");
                self.value(value);
            }
            TagMatcher::Regex { value, case_sensitive, negated } => {
                self.key(&t.key);
                self.push(if *negated { "!~" } else { "~" });
                self.value(value);
                if !case_sensitive {
                    self.push(",i");
                }
            }
            TagMatcher::KeyRegex { pattern, value_pattern, case_sensitive } => {
                self.push("~");
                self.key(pattern);
                self.push("~");
                self.value(value_pattern);
                if !case_sensitive {
                    self.push(",i");
                }
            }
        }
        self.push("]");
    }

    fn list(&mut self, items: &[String], each: fn(&mut Self, &str)) {
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                self.push(",");
            }
            each(self, item);
        }
    }

    fn paren_filter(&mut self, f: &Filter) {
        match f {
            Filter::ByTag(_) | Filter::ByInputSet { .. } => unreachable!("bracket filters"),
            Filter::BoundingBox { bbox } => match bbox {
                BboxSpec::Coords(c) => self.list(c, Self::number),
                BboxSpec::Macro(m) => self.macro_(m),
            },
            Filter::ByArea { set, id } => {
                self.push("area");
                if let Some(s) = set {
                    self.set(s);
                }
                if let Some(id) = id {
                    self.push(":");
                    self.number(id);
                }
            }
            Filter::AreaPivot { set } => {
                self.push("pivot");
                if let Some(s) = set {
                    self.set(s);
                }
            }
            Filter::ByElementId { ids, prefixed } => {
                if *prefixed {
                    self.push("id:");
                }
                self.list(ids, Self::number);
            }
            Filter::Around { set, radius, points } => {
                self.push("around");
                if let Some(s) = set {
                    self.set(s);
                }
                self.push(":");
                self.number(radius);
                for p in points {
                    self.push(",");
                    self.number(p);
                }
            }
            Filter::ByPolygon { polygon } => {
                self.push("poly:");
                self.literal(polygon);
            }
            Filter::Newer { date } => {
                self.push("newer:");
                self.literal(date);
            }
            Filter::ByDateOfChange { dates } => {
                self.push("changed");
                if !dates.is_empty() {
                    self.push(":");
                    self.list(dates, Self::literal);
                }
            }
            Filter::ByUser { kind, names } => {
                self.push(kind.as_str());
                self.push(":");
                match kind {
                    UserFilterKind::Uid | UserFilterKind::UidTouched => self.list(names, Self::number),
                    _ => self.list(names, Self::value),
                }
            }
            Filter::RecurseBy { kind, set, role } => {
                self.push(kind.as_str());
                if let Some(s) = set {
                    self.set(s);
                }
                if let Some(r) = role {
                    self.push(":");
                    self.value(r);
                }
            }
            Filter::ByWayCount { kind, set, range } => {
                self.push(kind);
                if let Some(s) = set {
                    self.set(s);
                }
                self.push(":");
                self.tokens_text(range);
            }
            Filter::Conditional { expression } => {
                self.push("if:");
                self.tokens_text(expression);
            }
            Filter::Opaque { text } => self.tokens_text(text),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut w = Writer { out: String::new(), template: false };
        w.statement(self);
        f.write_str(&w.out)
    }
}

/// Joins lexemes with single spaces; the result re-lexes to the same tokens.
pub(crate) fn join_lexemes<'a>(lexemes: impl IntoIterator<Item = &'a str>) -> String {
    lexemes.into_iter().collect::<Vec<_>>().join(" ")
}
