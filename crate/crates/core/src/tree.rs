//! Labeled-tree view of a query, modelled on the Overpass XML form.
//!
//! | construct                         | label                                     |
//! |-----------------------------------|-------------------------------------------|
//! | query root                        | `osm-script` plus one attribute per setting (`output=<format>` for `[out:]`, the setting name otherwise) |
//! | `node`/`way`/... query            | `query type=<kind>`                       |
//! | `{{geocodeArea:..}}` query        | `id-query type=area`                      |
//! | `{{geocodeId:..}}` query          | `id-query`                                |
//! | other macro query                 | `macro name=<name>`                       |
//! | `[k=v]` and other tag filters     | `has-kv` with `v`, `regv`, `regk`, `modv=not`, `case=ignore` flags |
//! | `(s,w,n,e)`, `({{bbox}})`         | `bbox-query`                              |
//! | `(area...)`                       | `area-query`                              |
//! | `(pivot...)`                      | `pivot`                                   |
//! | `.set` filter, `.set;` statement  | `item`                                    |
//! | `(123)`, `(id:...)`               | `id-query`                                |
//! | `(around...)`                     | `around`                                  |
//! | `(poly:...)`                      | `polygon-query`                           |
//! | `(newer:...)`                     | `newer`                                   |
//! | `(changed...)`                    | `changed`                                 |
//! | `(user:...)`, `(uid:...)`         | `user`                                    |
//! | `(w)`, `(bn)`, ...                | `recurse type=<w\|bn\|...>`               |
//! | `(way_cnt:..)`, `(way_link:..)`   | `way-cnt`, `way-link`                     |
//! | `(if:...)`                        | `filter`                                  |
//! | unknown `( ... )` filter          | `opaque-filter`                           |
//! | `( ... );`                        | `union`                                   |
//! | `( a; - b; );`                    | `difference`                              |
//! | `out ...;`                        | `print` with `mode=`, `order=`, `geometry=`, `limit` |
//! | `>`, `>>`, `<`, `<<`              | `recurse type=down\|down-rel\|up\|up-rel` |
//! | `is_in`                           | `coord-query`                             |
//! | `if`, `else` branch               | `if`, with the else branch under `else`   |
//! | `for`, `foreach`, `complete`, `retro`, `compare`, `convert`, `make`, `timeline`, `local` | the keyword |
//! | unknown statement                 | `opaque`                                  |
//!
//! Statements nest under their block; filters are children of their query.
//! Labels never contain tag keys, tag values or set names.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyntaxTree {
    pub label: String,
    pub children: Vec<SyntaxTree>,
}

impl SyntaxTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        SyntaxTree { label: label.into(), children: Vec::new() }
    }

    pub fn new(label: impl Into<String>, children: Vec<SyntaxTree>) -> Self {
        SyntaxTree { label: label.into(), children }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(SyntaxTree::node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(SyntaxTree::depth).max().unwrap_or(0)
    }

    /// Pre-order list of every node.
    pub fn nodes(&self) -> Vec<&SyntaxTree> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.nodes());
        }
        out
    }

    /// `label(child,child)` form; labels are escaped so distinct trees never collide.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    fn write_canonical(&self, out: &mut String) {
        for ch in self.label.chars() {
            if matches!(ch, '(' | ')' | ',' | '\\') {
                out.push('\\');
            }
            out.push(ch);
        }
        if !self.children.is_empty() {
            out.push('(');
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                c.write_canonical(out);
            }
            out.push(')');
        }
    }

    /// Indented outline, one node per line.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.write_pretty(0, &mut out);
        out
    }

    fn write_pretty(&self, indent: usize, out: &mut String) {
        out.push_str(&"  ".repeat(indent));
        out.push_str(&self.label);
        out.push('\n');
        for c in &self.children {
            c.write_pretty(indent + 1, out);
        }
    }
}

impl fmt::Display for SyntaxTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

pub fn to_syntax_tree(ast: &QueryAst) -> SyntaxTree {
    let mut label = String::from("osm-script");
    for s in &ast.settings {
        label.push(' ');
        if s.name == "out" {
            label.push_str("output=");
            label.push_str(ast.output_format());
        } else {
            label.push_str(&s.name);
        }
    }
    SyntaxTree::new(label, statements(&ast.statements))
}

pub fn count_syntactic_units(ast: &QueryAst) -> usize {
    to_syntax_tree(ast).node_count()
}

fn statements(stmts: &[Statement]) -> Vec<SyntaxTree> {
    stmts.iter().map(statement).collect()
}

fn statement(stmt: &Statement) -> SyntaxTree {
    match stmt {
        Statement::Query(q) => query(q),
        Statement::Union { body, .. } => SyntaxTree::new("union", statements(body)),
        Statement::Difference { left, right, .. } => {
            SyntaxTree::new("difference", vec![statement(left), statement(right)])
        }
        Statement::If { then_body, else_body, .. } => {
            let mut children = statements(then_body);
            if let Some(e) = else_body {
                children.push(SyntaxTree::new("else", statements(e)));
            }
            SyntaxTree::new("if", children)
        }
        Statement::For { body, .. } => SyntaxTree::new("for", statements(body)),
        Statement::ForEach { body, .. } => SyntaxTree::new("foreach", statements(body)),
        Statement::Complete { body, .. } => SyntaxTree::new("complete", statements(body)),
        Statement::Retro { body, .. } => SyntaxTree::new("retro", statements(body)),
        Statement::Compare { body, .. } => {
            SyntaxTree::new("compare", body.as_deref().map(statements).unwrap_or_default())
        }
        Statement::Out { params, .. } => SyntaxTree::leaf(print_label(params)),
        Statement::Recurse { direction, .. } => {
            let t = match direction {
                RecurseDirection::Down => "down",
                RecurseDirection::DownRelations => "down-rel",
                RecurseDirection::Up => "up",
                RecurseDirection::UpRelations => "up-rel",
            };
            SyntaxTree::leaf(format!("recurse type={t}"))
        }
        Statement::IsIn { .. } => SyntaxTree::leaf("coord-query"),
        Statement::Item { .. } => SyntaxTree::leaf("item"),
        Statement::Convert { .. } => SyntaxTree::leaf("convert"),
        Statement::Make { .. } => SyntaxTree::leaf("make"),
        Statement::Timeline { .. } => SyntaxTree::leaf("timeline"),
        Statement::Local { .. } => SyntaxTree::leaf("local"),
        Statement::Opaque { .. } => SyntaxTree::leaf("opaque"),
    }
}

fn query(q: &QueryStatement) -> SyntaxTree {
    let label = match &q.target {
        QueryTarget::Element(kind) => format!("query type={}", kind.as_str()),
        QueryTarget::Macro(m) => match m.kind {
            MacroKind::GeocodeArea => "id-query type=area".to_string(),
            MacroKind::GeocodeId => "id-query".to_string(),
            _ => format!("macro name={}", mask_digits(&m.name)),
        },
    };
    SyntaxTree::new(label, q.filters.iter().map(filter).collect())
}

fn filter(f: &Filter) -> SyntaxTree {
    let label = match f {
        Filter::ByTag(t) => has_kv_label(t),
        Filter::BoundingBox { .. } => "bbox-query".into(),
        Filter::ByArea { .. } => "area-query".into(),
        Filter::AreaPivot { .. } => "pivot".into(),
        Filter::ByInputSet { .. } => "item".into(),
        Filter::ByElementId { .. } => "id-query".into(),
        Filter::Around { .. } => "around".into(),
        Filter::ByPolygon { .. } => "polygon-query".into(),
        Filter::Newer { .. } => "newer".into(),
        Filter::ByDateOfChange { .. } => "changed".into(),
        Filter::ByUser { .. } => "user".into(),
        Filter::RecurseBy { kind, .. } => format!("recurse type={}", kind.as_str()),
        Filter::ByWayCount { kind, .. } => kind.replace('_', "-"),
        Filter::Conditional { .. } => "filter".into(),
        Filter::Opaque { .. } => "opaque-filter".into(),
    };
    SyntaxTree::leaf(label)
}

fn has_kv_label(t: &TagFilter) -> String {
    let (flags, case_sensitive): (&[&str], bool) = match &t.matcher {
        TagMatcher::Exists => (&[], true),
        TagMatcher::NotExists => (&["modv=not"], true),
        TagMatcher::Equals { .. } => (&["v"], true),
        TagMatcher::NotEquals { .. } => (&["v", "modv=not"], true),
        TagMatcher::Regex { case_sensitive, negated: false, .. } => (&["regv"], *case_sensitive),
        TagMatcher::Regex { case_sensitive, negated: true, .. } => (&["regv", "modv=not"], *case_sensitive),
        TagMatcher::KeyRegex { case_sensitive, .. } => (&["regk", "regv"], *case_sensitive),
    };
    let mut label = String::from("has-kv");
    for f in flags {
        label.push(' ');
        label.push_str(f);
    }
    if !case_sensitive {
        label.push_str(" case=ignore");
    }
    label
}

fn print_label(params: &[String]) -> String {
    let mut mode = None;
    let mut order = None;
    let mut geometry = None;
    let mut limit = false;
    for p in params {
        let word = p.split_whitespace().next().unwrap_or("");
        match word {
            "ids" | "skel" | "body" | "tags" | "meta" | "count" | "noids" => mode = Some(word),
            "qt" | "asc" => order = Some(word),
            "center" | "bb" | "geom" => geometry = Some(word),
            w if w.chars().all(|c| c.is_ascii_digit()) && !w.is_empty() => limit = true,
            _ => {}
        }
    }
    let mut label = String::from("print");
    for (name, v) in [("mode", mode), ("order", order), ("geometry", geometry)] {
        if let Some(v) = v {
            label.push_str(&format!(" {name}={v}"));
        }
    }
    if limit {
        label.push_str(" limit");
    }
    label
}
