//! Random query, tag-set and tree generators.
#![allow(dead_code)]

use std::collections::BTreeSet;

use oqlkit::analysis::KvSet;
use oqlkit::metrics::{ElementRef, ElementSet, OsmKind};
use oqlkit::tree::SyntaxTree;
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum Filter {
    Tag(u8),
    Area,
    Around,
    Bbox,
    Id,
}

#[derive(Debug, Clone)]
pub struct Query {
    pub ty: usize,
    pub filters: Vec<Filter>,
    pub assign: bool,
}

#[derive(Debug, Clone)]
pub enum Stmt {
    Query(Query),
    Union(Vec<Query>, bool),
    Out(usize),
    Recurse(usize),
    SetOut,
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub json: bool,
    pub timeout: bool,
    pub stmts: Vec<Stmt>,
}

/// Identifiers and numbers substituted into a skeleton, used round robin.
#[derive(Debug, Clone)]
pub struct Names {
    pub keys: Vec<String>,
    pub values: Vec<String>,
    pub sets: Vec<String>,
    pub numbers: Vec<u32>,
}

const TYPES: [&str; 5] = ["node", "way", "rel", "nwr", "area"];
const OUTS: [&str; 5] = ["out;", "out center;", "out geom;", "out ids;", "out skel qt;"];
const RECURSE: [&str; 4] = [">;", "<;", ">>;", "<<;"];

fn filter() -> impl Strategy<Value = Filter> {
    prop_oneof![
        4 => (0u8..5).prop_map(Filter::Tag),
        1 => Just(Filter::Area),
        1 => Just(Filter::Around),
        1 => Just(Filter::Bbox),
        1 => Just(Filter::Id),
    ]
}

fn query() -> impl Strategy<Value = Query> {
    (0..TYPES.len(), vec(filter(), 0..4), any::<bool>()).prop_map(|(ty, filters, assign)| Query { ty, filters, assign })
}

fn stmt() -> impl Strategy<Value = Stmt> {
    prop_oneof![
        4 => query().prop_map(Stmt::Query),
        2 => (vec(query(), 1..4), any::<bool>()).prop_map(|(qs, a)| Stmt::Union(qs, a)),
        2 => (0..OUTS.len()).prop_map(Stmt::Out),
        1 => (0..RECURSE.len()).prop_map(Stmt::Recurse),
        1 => Just(Stmt::SetOut),
    ]
}

pub fn skeleton() -> impl Strategy<Value = Skeleton> {
    (any::<bool>(), any::<bool>(), vec(stmt(), 1..6)).prop_map(|(json, timeout, stmts)| Skeleton { json, timeout, stmts })
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}"
}

pub fn names() -> impl Strategy<Value = Names> {
    (
        vec(ident(), 1..4),
        vec("[A-Za-z0-9 _:-]{1,8}", 1..4),
        vec("[a-zA-Z_][a-zA-Z0-9_]{0,5}", 1..3),
        vec(1u32..100_000, 1..4),
    )
        .prop_map(|(keys, values, sets, numbers)| Names { keys, values, sets, numbers })
}

struct Render<'a> {
    names: &'a Names,
    k: usize,
    v: usize,
    s: usize,
    n: usize,
    out: String,
}

impl Render<'_> {
    fn key(&mut self) -> String {
        self.k += 1;
        self.names.keys[self.k % self.names.keys.len()].clone()
    }
    fn value(&mut self) -> String {
        self.v += 1;
        self.names.values[self.v % self.names.values.len()].clone()
    }
    fn set(&mut self) -> String {
        self.s += 1;
        self.names.sets[self.s % self.names.sets.len()].clone()
    }
    fn num(&mut self) -> u32 {
        self.n += 1;
        self.names.numbers[self.n % self.names.numbers.len()]
    }

    fn query(&mut self, q: &Query) {
        self.out.push_str(TYPES[q.ty]);
        for f in &q.filters {
            let text = match f {
                Filter::Tag(0) => format!("[\"{}\"=\"{}\"]", self.key(), self.value()),
                Filter::Tag(1) => format!("[\"{}\"]", self.key()),
                Filter::Tag(2) => format!("[\"{}\"!=\"{}\"]", self.key(), self.value()),
                Filter::Tag(3) => format!("[\"{}\"~\"{}\",i]", self.key(), self.value()),
                Filter::Tag(_) => format!("[!\"{}\"]", self.key()),
                Filter::Area => format!("(area.{})", self.set()),
                Filter::Around => format!("(around:{},{}.5,{}.25)", self.num(), self.num() % 90, self.num() % 180),
                Filter::Bbox => format!("({}.0,{}.0,{}.5,{}.5)", self.num() % 80, self.num() % 170, self.num() % 80, self.num() % 170),
                Filter::Id => format!("({})", self.num()),
            };
            self.out.push_str(&text);
        }
        if q.assign {
            let s = self.set();
            self.out.push_str(&format!("->.{s}"));
        }
        self.out.push(';');
    }
}

pub fn render(sk: &Skeleton, names: &Names) -> String {
    let mut r = Render { names, k: 0, v: 0, s: 0, n: 0, out: String::new() };
    if sk.json {
        r.out.push_str("[out:json]");
    }
    if sk.timeout {
        let n = r.num();
        r.out.push_str(&format!("[timeout:{n}]"));
    }
    if sk.json || sk.timeout {
        r.out.push(';');
    }
    for st in &sk.stmts {
        match st {
            Stmt::Query(q) => r.query(q),
            Stmt::Union(qs, assign) => {
                r.out.push('(');
                for q in qs {
                    r.query(q);
                }
                r.out.push(')');
                if *assign {
                    let s = r.set();
                    r.out.push_str(&format!("->.{s}"));
                }
                r.out.push(';');
            }
            Stmt::Out(i) => r.out.push_str(OUTS[*i]),
            Stmt::Recurse(i) => r.out.push_str(RECURSE[*i]),
            Stmt::SetOut => {
                let s = r.set();
                r.out.push_str(&format!(".{s} out;"));
            }
        }
        r.out.push('\n');
    }
    r.out
}

pub fn query_text() -> impl Strategy<Value = String> {
    (skeleton(), names()).prop_map(|(s, n)| render(&s, &n))
}

pub fn kv_set() -> impl Strategy<Value = KvSet> {
    let small = || "[a-d]";
    (btree_set((small(), small()), 0..4), btree_set(small(), 0..4), btree_set(small(), 0..4))
        .prop_map(|(pairs, keys, values)| KvSet { pairs, keys, values })
}

pub fn tree() -> impl Strategy<Value = SyntaxTree> {
    let leaf = "[abc]".prop_map(SyntaxTree::leaf);
    leaf.prop_recursive(4, 24, 3, |inner| {
        ("[abc]", vec(inner, 0..4)).prop_map(|(label, children)| SyntaxTree::new(label, children))
    })
}

pub fn element_set() -> impl Strategy<Value = ElementSet> {
    btree_set((0usize..3, 0u64..6), 0..6).prop_map(|xs: BTreeSet<(usize, u64)>| {
        xs.into_iter()
            .map(|(k, id)| ElementRef::osm([OsmKind::Node, OsmKind::Way, OsmKind::Relation][k], id))
            .collect()
    })
}

/// Eq. 1 evaluated over tagged strings with linear scans.
pub fn kvs_oracle(a: &KvSet, b: &KvSet) -> f64 {
    let flat = |s: &KvSet| -> Vec<String> {
        let mut v: Vec<String> = s.keys.iter().map(|k| format!("key\u{0}{k}")).collect();
        v.extend(s.values.iter().map(|x| format!("value\u{0}{x}")));
        v.extend(s.pairs.iter().map(|(k, x)| format!("pair\u{0}{k}\u{0}{x}")));
        v
    };
    let (fa, fb) = (flat(a), flat(b));
    if fa.is_empty() && fb.is_empty() {
        return 1.0;
    }
    let common = fa.iter().filter(|x| fb.contains(x)).count();
    common as f64 / fa.len().max(fb.len()) as f64
}

fn same_tree(a: &SyntaxTree, b: &SyntaxTree) -> bool {
    a.label == b.label && a.children.len() == b.children.len() && a.children.iter().zip(&b.children).all(|(x, y)| same_tree(x, y))
}

/// Pairs every subtree of `a` with an unused identical subtree of `b`.
pub fn matching_oracle(a: &SyntaxTree, b: &SyntaxTree) -> usize {
    let nb = b.nodes();
    let mut used = vec![false; nb.len()];
    let mut count = 0;
    for x in a.nodes() {
        if let Some(j) = (0..nb.len()).find(|&j| !used[j] && same_tree(x, nb[j])) {
            used[j] = true;
            count += 1;
        }
    }
    count
}
