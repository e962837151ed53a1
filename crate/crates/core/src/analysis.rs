//! Tag inventories, templates, syntax features and comments.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::*;
use crate::lexer::{tokenize, TokenKind};

/// Keys, values and key-value pairs used by the tag filters of a query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvSet {
    pub pairs: BTreeSet<(String, String)>,
    pub keys: BTreeSet<String>,
    pub values: BTreeSet<String>,
}

impl KvSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.keys.is_empty() && self.values.is_empty()
    }

    pub fn insert_key(&mut self, key: &str) {
        self.keys.insert(key.to_string());
    }

    pub fn insert_pair(&mut self, key: &str, value: &str) {
        self.keys.insert(key.to_string());
        self.values.insert(value.to_string());
        self.pairs.insert((key.to_string(), value.to_string()));
    }

    /// Number of members of the combined key/value/pair collection.
    pub fn len(&self) -> usize {
        self.pairs.len() + self.keys.len() + self.values.len()
    }

    pub fn extend(&mut self, other: &KvSet) {
        self.pairs.extend(other.pairs.iter().cloned());
        self.keys.extend(other.keys.iter().cloned());
        self.values.extend(other.values.iter().cloned());
    }
}

pub fn extract_kv(ast: &QueryAst) -> KvSet {
    let mut kv = KvSet::default();
    for t in ast.tag_filters() {
        match t.value() {
            Some(v) => kv.insert_pair(&t.key, v),
            None => kv.insert_key(&t.key),
        }
    }
    kv
}

pub fn normalize_template(ast: &QueryAst) -> String {
    ast.to_template_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    Settings,
    Block,
    Standalone,
    Filters,
}

impl FeatureGroup {
    pub fn name(self) -> &'static str {
        match self {
            Self::Settings => "Settings",
            Self::Block => "Block Statements",
            Self::Standalone => "Standalone Statements",
            Self::Filters => "Filters",
        }
    }
}

macro_rules! features {
    ($($variant:ident => ($group:ident, $name:literal)),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Feature {
            $($variant),*
        }

        impl Feature {
            pub const ALL: &'static [Feature] = &[$(Feature::$variant),*];

            pub fn group(self) -> FeatureGroup {
                match self {
                    $(Feature::$variant => FeatureGroup::$group),*
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $(Feature::$variant => $name),*
                }
            }
        }
    };
}

features! {
    Timeout => (Settings, "Timeout"),
    ElementLimit => (Settings, "Element Limit"),
    OutputFormat => (Settings, "Output Format"),
    GlobalBoundingBox => (Settings, "Bounding Box"),
    Date => (Settings, "Date"),
    Diff => (Settings, "Diff/adiff two dates"),
    Union => (Block, "Union"),
    Difference => (Block, "Difference"),
    If => (Block, "if"),
    ForEach => (Block, "for-each"),
    For => (Block, "for"),
    Complete => (Block, "complete"),
    Retro => (Block, "retro"),
    Compare => (Block, "compare"),
    Out => (Standalone, "out"),
    Item => (Standalone, "Item"),
    RecurseUp => (Standalone, "Recurse Up"),
    RecurseUpRelations => (Standalone, "Recurse Up Relations"),
    RecurseDown => (Standalone, "Recurse Down"),
    RecurseDownRelations => (Standalone, "Recurse Down Relations"),
    IsIn => (Standalone, "is_in"),
    Timeline => (Standalone, "timeline"),
    Local => (Standalone, "local"),
    Convert => (Standalone, "convert"),
    Make => (Standalone, "make"),
    QueryStatement => (Standalone, "The Query Statement"),
    QueryFilter => (Standalone, "The Query Filter"),
    ByTag => (Filters, "By Tag"),
    BoundingBox => (Filters, "Bounding Box"),
    RecurseBy => (Filters, "Recurse By nwr"),
    RecurseByWayCount => (Filters, "Recurse By Way Count"),
    ByInputSet => (Filters, "By Input Set"),
    ByElementId => (Filters, "By Element Id"),
    RelativeToOtherElements => (Filters, "Relative to Other Elements"),
    ByPolygon => (Filters, "By Polygon"),
    Newer => (Filters, "Newer"),
    ByDateOfChange => (Filters, "By Date of Change"),
    ByUser => (Filters, "By User"),
    ByArea => (Filters, "By Area"),
    AreaPivot => (Filters, "Area Pivot"),
    ConditionalQueryFilter => (Filters, "Conditional Query Filter"),
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type FeatureSet = BTreeSet<Feature>;

/// Detection rules:
/// - settings by header name: `timeout`, `maxsize`, `out`, `bbox`, `date`, `diff`/`adiff`;
/// - block and standalone statements by statement kind, anywhere in the query;
/// - The Query Statement: any query, including a geocode macro used as a query;
/// - The Query Filter: a query whose filters are only input sets and `(if:)`, with at least one `(if:)`;
/// - Conditional Query Filter: any `(if:)`;
/// - By Element Id: `(123)`, `(id:..)`, and `{{geocodeArea}}`/`{{geocodeId}}` queries, which expand to id lookups;
/// - By Input Set: a query reading an explicit named set, via `.a`, `(area.a)`, `(around.a:..)`, `(pivot.a)` or `(w.a)`;
/// - Relative to Other Elements: `(around...)`.
pub fn detect_features(ast: &QueryAst) -> FeatureSet {
    let mut out = FeatureSet::new();
    for s in &ast.settings {
        let f = match s.name.as_str() {
            "timeout" => Feature::Timeout,
            "maxsize" => Feature::ElementLimit,
            "out" => Feature::OutputFormat,
            "bbox" => Feature::GlobalBoundingBox,
            "date" => Feature::Date,
            "diff" | "adiff" => Feature::Diff,
            _ => continue,
        };
        out.insert(f);
    }
    ast.walk_statements(&mut |s| {
        let f = match s {
            Statement::Query(q) => {
                query_features(q, &mut out);
                Feature::QueryStatement
            }
            Statement::Union { .. } => Feature::Union,
            Statement::Difference { .. } => Feature::Difference,
            Statement::If { .. } => Feature::If,
            Statement::For { .. } => Feature::For,
            Statement::ForEach { .. } => Feature::ForEach,
            Statement::Complete { .. } => Feature::Complete,
            Statement::Retro { .. } => Feature::Retro,
            Statement::Compare { .. } => Feature::Compare,
            Statement::Out { .. } => Feature::Out,
            Statement::Recurse { direction, .. } => match direction {
                RecurseDirection::Down => Feature::RecurseDown,
                RecurseDirection::DownRelations => Feature::RecurseDownRelations,
                RecurseDirection::Up => Feature::RecurseUp,
                RecurseDirection::UpRelations => Feature::RecurseUpRelations,
            },
            Statement::IsIn { .. } => Feature::IsIn,
            Statement::Item { .. } => Feature::Item,
            Statement::Convert { .. } => Feature::Convert,
            Statement::Make { .. } => Feature::Make,
            Statement::Timeline { .. } => Feature::Timeline,
            Statement::Local { .. } => Feature::Local,
            Statement::Opaque { .. } => return,
        };
        out.insert(f);
    });
    out
}

fn query_features(q: &QueryStatement, out: &mut FeatureSet) {
    if let QueryTarget::Macro(m) = &q.target {
        if matches!(m.kind, MacroKind::GeocodeArea | MacroKind::GeocodeId) {
            out.insert(Feature::ByElementId);
        }
    }
    let mut has_if = false;
    let mut only_sets_and_if = true;
    for f in &q.filters {
        let (feature, set) = match f {
            Filter::ByTag(_) => (Feature::ByTag, None),
            Filter::BoundingBox { .. } => (Feature::BoundingBox, None),
            Filter::ByArea { set, .. } => (Feature::ByArea, set.as_ref()),
            Filter::AreaPivot { set } => (Feature::AreaPivot, set.as_ref()),
            Filter::ByInputSet { set } => (Feature::ByInputSet, Some(set)),
            Filter::ByElementId { .. } => (Feature::ByElementId, None),
            Filter::Around { set, .. } => (Feature::RelativeToOtherElements, set.as_ref()),
            Filter::ByPolygon { .. } => (Feature::ByPolygon, None),
            Filter::Newer { .. } => (Feature::Newer, None),
            Filter::ByDateOfChange { .. } => (Feature::ByDateOfChange, None),
            Filter::ByUser { .. } => (Feature::ByUser, None),
            Filter::RecurseBy { set, .. } => (Feature::RecurseBy, set.as_ref()),
            Filter::ByWayCount { .. } => (Feature::RecurseByWayCount, None),
            Filter::Conditional { .. } => {
                has_if = true;
                out.insert(Feature::ConditionalQueryFilter);
                continue;
            }
            Filter::Opaque { .. } => {
                only_sets_and_if = false;
                continue;
            }
        };
        out.insert(feature);
        if set.is_some() {
            out.insert(Feature::ByInputSet);
        }
        if !matches!(f, Filter::ByInputSet { .. }) {
            only_sets_and_if = false;
        }
    }
    if has_if && only_sets_and_if {
        out.insert(Feature::QueryFilter);
    }
}

/// Every comment in `text`, trimmed of its delimiters, paired with the query
/// with all comments removed. Empty when the text has no comments or does not
/// tokenize.
pub fn extract_comments(text: &str) -> Vec<(String, String)> {
    let Ok(tokens) = tokenize(text) else {
        return Vec::new();
    };
    let mut comments = Vec::new();
    let mut stripped = String::with_capacity(text.len());
    let mut drop_newline = false;
    for t in &tokens {
        if t.kind == TokenKind::Comment {
            comments.push(comment_body(&t.lexeme).to_string());
            let line_start = stripped.rfind('\n').map(|i| i + 1).unwrap_or(0);
            let own_line = stripped[line_start..].trim().is_empty();
            let keep = stripped.trim_end_matches([' ', '\t']).len();
            stripped.truncate(keep);
            drop_newline = own_line;
            continue;
        }
        if drop_newline && t.kind == TokenKind::Whitespace {
            drop_newline = false;
            match t.lexeme.find('\n') {
                Some(i) => stripped.push_str(&t.lexeme[i + 1..]),
                None => stripped.push_str(&t.lexeme),
            }
            continue;
        }
        drop_newline = false;
        stripped.push_str(&t.lexeme);
    }
    let stripped = stripped.trim().to_string();
    comments.into_iter().map(|c| (c, stripped.clone())).collect()
}

fn comment_body(lexeme: &str) -> &str {
    let inner = if let Some(rest) = lexeme.strip_prefix("//") {
        rest
    } else {
        lexeme
            .strip_prefix("/*")
            .and_then(|s| s.strip_suffix("*/"))
            .unwrap_or(lexeme)
    };
    inner.trim()
}
