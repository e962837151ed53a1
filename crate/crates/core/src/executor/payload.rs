//! Element extraction from Overpass responses.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::ExecError;
use crate::metrics::{ElementRef, ElementSet, OsmKind};

/// How a response body is encoded, as requested by the `[out:...]` setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadFormat {
    Json,
    Xml,
    Csv { separator: u8, header: bool },
}

impl PayloadFormat {
    /// Format named by an `[out:...]` setting value; `None` when absent.
    pub fn from_setting(value: Option<&str>) -> Self {
        let Some(v) = value else { return PayloadFormat::Xml };
        let v = v.trim();
        if v.starts_with("json") {
            PayloadFormat::Json
        } else if let Some(rest) = v.strip_prefix("csv") {
            csv_options(rest)
        } else {
            PayloadFormat::Xml
        }
    }

    pub fn from_content_type(content_type: &str) -> Option<Self> {
        let ct = content_type.to_ascii_lowercase();
        if ct.contains("json") {
            Some(PayloadFormat::Json)
        } else if ct.contains("xml") {
            Some(PayloadFormat::Xml)
        } else {
            None
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PayloadFormat::Json => "json",
            PayloadFormat::Xml => "xml",
            PayloadFormat::Csv { .. } => "csv",
        }
    }
}

/// Reads `( fields ; header ; "sep" )` from the text following `csv`.
fn csv_options(rest: &str) -> PayloadFormat {
    let inner = rest.trim().trim_start_matches('(').trim_end_matches(')');
    let mut depth_parts = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    for ch in inner.chars() {
        match quote {
            Some(q) => {
                current.push(ch);
                if ch == q {
                    quote = None;
                }
            }
            None if ch == '"' || ch == '\'' => {
                quote = Some(ch);
                current.push(ch);
            }
            None if ch == ';' => depth_parts.push(std::mem::take(&mut current)),
            None => current.push(ch),
        }
    }
    depth_parts.push(current);
    let header = depth_parts.get(1).map(|h| h.trim() != "false").unwrap_or(true);
    let separator = depth_parts
        .get(2)
        .map(|s| crate::lexer::unquote(s.trim()).to_string())
        .and_then(|s| match s.as_str() {
            "\\t" => Some(b'\t'),
            _ => s.bytes().next(),
        })
        .unwrap_or(b'\t');
    PayloadFormat::Csv { separator, header }
}

/// Everything read from one response body.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extracted {
    pub elements: ElementSet,
    /// Number of element records in the payload, duplicates included.
    pub returned_count: usize,
    /// Element records in payload order, as generic values.
    pub records: Vec<Value>,
    /// Server remark, present when the query failed at runtime.
    pub remark: Option<String>,
    pub warnings: Vec<String>,
}

pub fn extract_elements(payload: &[u8], format: &PayloadFormat) -> Result<ElementSet, ExecError> {
    parse_payload(payload, format).map(|e| e.elements)
}

pub fn parse_payload(payload: &[u8], format: &PayloadFormat) -> Result<Extracted, ExecError> {
    match format {
        PayloadFormat::Json => parse_json(payload),
        PayloadFormat::Xml => parse_xml(payload),
        PayloadFormat::Csv { separator, header } => parse_csv(payload, *separator, *header),
    }
}

fn content_hash(v: &Value) -> String {
    let mut h = Sha256::new();
    h.update(v.to_string().as_bytes());
    hex::encode(h.finalize())
}

/// Identity of one element record: OSM kind and id when both are present,
/// otherwise a hash of the record without its id.
fn identify(record: &Value) -> ElementRef {
    let kind = record.get("type").and_then(Value::as_str).and_then(OsmKind::from_name);
    let id = record.get("id").and_then(Value::as_u64);
    if let (Some(kind), Some(id)) = (kind, id) {
        return ElementRef::osm(kind, id);
    }
    let mut stripped = record.clone();
    if let Value::Object(m) = &mut stripped {
        m.remove("id");
    }
    ElementRef::Derived { content_hash: content_hash(&stripped) }
}

fn collect(records: Vec<Value>, remark: Option<String>, warnings: Vec<String>) -> Extracted {
    let elements = records.iter().map(identify).collect();
    Extracted { elements, returned_count: records.len(), records, remark, warnings }
}

fn malformed(what: &str, detail: impl std::fmt::Display) -> ExecError {
    ExecError::MalformedPayload(format!("{what}: {detail}"))
}

fn parse_json(payload: &[u8]) -> Result<Extracted, ExecError> {
    let doc: Value = serde_json::from_slice(payload).map_err(|e| malformed("json", e))?;
    let elements = doc
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("json", "missing \"elements\" array"))?;
    let remark = doc.get("remark").and_then(Value::as_str).map(str::to_string);
    Ok(collect(elements.clone(), remark, Vec::new()))
}

fn attr_value(key: &str, raw: String) -> Value {
    if matches!(key, "id" | "ref" | "version" | "changeset" | "uid") {
        if let Ok(n) = raw.parse::<u64>() {
            return Value::from(n);
        }
    }
    if matches!(key, "lat" | "lon") {
        if let Ok(n) = raw.parse::<serde_json::Number>() {
            return Value::Number(n);
        }
    }
    Value::String(raw)
}

fn attributes(e: &BytesStart<'_>) -> Result<Vec<(String, String)>, ExecError> {
    let mut out = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|e| malformed("xml", e))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a.unescape_value().map_err(|e| malformed("xml", e))?.into_owned();
        out.push((key, value));
    }
    Ok(out)
}

const XML_SKIPPED: &[&str] = &["note", "meta", "bounds"];

fn parse_xml(payload: &[u8]) -> Result<Extracted, ExecError> {
    let mut reader = Reader::from_reader(payload);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut depth = 0usize;
    let mut records: Vec<Value> = Vec::new();
    let mut current: Option<Map<String, Value>> = None;
    let mut remark: Option<String> = None;
    let mut in_remark = false;
    let mut seen_root = false;
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| malformed("xml", e))?;
        let (start, empty) = match &event {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
            if depth == 0 {
                seen_root = true;
            } else if depth == 1 {
                if name == "remark" {
                    in_remark = !empty;
                } else if !XML_SKIPPED.contains(&name.as_str()) {
                    let mut m = Map::new();
                    m.insert("type".into(), Value::String(name.clone()));
                    for (k, v) in attributes(&e)? {
                        let v = attr_value(&k, v);
                        m.insert(k, v);
                    }
                    if empty {
                        records.push(Value::Object(m));
                    } else {
                        current = Some(m);
                    }
                }
            } else if let Some(m) = current.as_mut() {
                let attrs = attributes(&e)?;
                if name == "tag" {
                    let get = |k: &str| attrs.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
                    if let (Some(k), Some(v)) = (get("k"), get("v")) {
                        let tags = m.entry("tags").or_insert_with(|| Value::Object(Map::new()));
                        if let Value::Object(t) = tags {
                            t.insert(k, Value::String(v));
                        }
                    }
                } else {
                    let mut child = Map::new();
                    child.insert("type".into(), Value::String(name.clone()));
                    for (k, v) in attrs {
                        let v = attr_value(&k, v);
                        child.insert(k, v);
                    }
                    let list = m.entry("children").or_insert_with(|| Value::Array(Vec::new()));
                    if let Value::Array(l) = list {
                        l.push(Value::Object(child));
                    }
                }
            }
            if !empty {
                depth += 1;
            }
        } else {
            match event {
                Event::End(_) => {
                    depth = depth.saturating_sub(1);
                    if depth == 1 {
                        if let Some(m) = current.take() {
                            records.push(Value::Object(m));
                        }
                        in_remark = false;
                    }
                }
                Event::Text(t) if in_remark => {
                    let text = t.unescape().map_err(|e| malformed("xml", e))?;
                    remark = Some(text.trim().to_string());
                }
                Event::Eof => break,
                _ => {}
            }
        }
        buf.clear();
    }
    if !seen_root {
        return Err(malformed("xml", "no root element"));
    }
    Ok(collect(records, remark, Vec::new()))
}

fn parse_csv(payload: &[u8], separator: u8, header: bool) -> Result<Extracted, ExecError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(separator)
        .has_headers(header)
        .flexible(true)
        .from_reader(payload);
    let columns: Vec<String> = if header {
        reader
            .headers()
            .map_err(|e| malformed("csv", e))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| malformed("csv", e))?;
        let mut m = Map::new();
        for (i, cell) in row.iter().enumerate() {
            let name = columns.get(i).cloned().unwrap_or_else(|| format!("column{}", i + 1));
            let key = match name.as_str() {
                "@id" => "id".to_string(),
                "@type" => "type".to_string(),
                _ => name,
            };
            let value = attr_value(&key, cell.to_string());
            m.insert(key, value);
        }
        records.push(Value::Object(m));
    }
    let mut warnings = Vec::new();
    let has_ids = columns.iter().any(|c| c == "@id") && columns.iter().any(|c| c == "@type");
    if !has_ids && !records.is_empty() {
        warnings.push("csv output without ::type and ::id columns; rows identified by content hash".to_string());
    }
    Ok(collect(records, None, warnings))
}

/// Python-literal rendering of a JSON value, e.g. `{'type': 'node', 'id': 1}`.
pub fn python_repr(v: &Value) -> String {
    let mut out = String::new();
    write_repr(v, &mut out);
    out
}

fn write_repr(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("None"),
        Value::Bool(true) => out.push_str("True"),
        Value::Bool(false) => out.push_str("False"),
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => out.push_str(&python_str(s)),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_repr(item, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            out.push('{');
            for (i, (k, item)) in m.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&python_str(k));
                out.push_str(": ");
                write_repr(item, out);
            }
            out.push('}');
        }
    }
}

fn python_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUBWAY_PAYLOAD: &str = r#"{"version":0.6,"generator":"Overpass API","elements":[{"type":"node","id":486093610,"lat":31.3242632,"lon":121.5273796,"tags":{"railway":"subway_entrance","ref":"3"}}]}"#;

    #[test]
    fn json_elements() {
        let x = parse_payload(SUBWAY_PAYLOAD.as_bytes(), &PayloadFormat::Json).unwrap();
        assert_eq!(x.elements, [ElementRef::osm(OsmKind::Node, 486093610)].into_iter().collect());
        assert_eq!(
            python_repr(&x.records[0]),
            "{'type': 'node', 'id': 486093610, 'lat': 31.3242632, 'lon': 121.5273796, 'tags': {'railway': 'subway_entrance', 'ref': '3'}}"
        );
    }

    #[test]
    fn json_empty_and_duplicates() {
        let empty = extract_elements(br#"{"elements":[]}"#, &PayloadFormat::Json).unwrap();
        assert!(empty.is_empty());
        let dup = parse_payload(
            br#"{"elements":[{"type":"way","id":5},{"type":"node","id":5},{"type":"way","id":5}]}"#,
            &PayloadFormat::Json,
        )
        .unwrap();
        assert_eq!(dup.elements.len(), 2);
        assert_eq!(dup.returned_count, 3);
    }

    #[test]
    fn derived_elements_hash_content() {
        let p = br#"{"elements":[{"type":"stat","id":1,"tags":{"n":"3"}},{"type":"stat","id":2,"tags":{"n":"3"}},{"type":"stat","id":3,"tags":{"n":"4"}}]}"#;
        let x = extract_elements(p, &PayloadFormat::Json).unwrap();
        assert_eq!(x.len(), 2);
        assert!(x.iter().all(|e| matches!(e, ElementRef::Derived { .. })));
    }

    #[test]
    fn json_remark() {
        let x = parse_payload(
            br#"{"elements":[],"remark":"runtime error: Query timed out in \"query\" at line 3 after 2 seconds."}"#,
            &PayloadFormat::Json,
        )
        .unwrap();
        assert!(x.remark.unwrap().contains("timed out"));
    }

    #[test]
    fn malformed_json() {
        assert!(extract_elements(b"{", &PayloadFormat::Json).is_err());
        assert!(extract_elements(b"{}", &PayloadFormat::Json).is_err());
    }

    #[test]
    fn xml_elements() {
        let p = r#"<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6" generator="Overpass API">
<note>The data included in this document is from www.openstreetmap.org.</note>
<meta osm_base="2023-01-01T00:00:00Z"/>
  <node id="486093610" lat="31.3242632" lon="121.5273796">
    <tag k="railway" v="subway_entrance"/>
  </node>
  <way id="7"><nd ref="1"/><nd ref="2"/></way>
  <relation id="7"/>
  <remark> runtime error: something </remark>
</osm>"#;
        let x = parse_payload(p.as_bytes(), &PayloadFormat::Xml).unwrap();
        assert_eq!(x.elements.len(), 3);
        assert!(x.elements.contains(&ElementRef::osm(OsmKind::Way, 7)));
        assert!(x.elements.contains(&ElementRef::osm(OsmKind::Relation, 7)));
        assert_eq!(x.remark.as_deref(), Some("runtime error: something"));
        assert_eq!(
            python_repr(&x.records[0]),
            "{'type': 'node', 'id': 486093610, 'lat': 31.3242632, 'lon': 121.5273796, 'tags': {'railway': 'subway_entrance'}}"
        );
    }

    #[test]
    fn csv_elements() {
        let f = PayloadFormat::from_setting(Some("csv ( :: type , :: id , \"name\" ; true ; \"|\" )"));
        assert_eq!(f, PayloadFormat::Csv { separator: b'|', header: true });
        let x = parse_payload(b"@type|@id|name\nnode|1|A\nway|1|B\n", &f).unwrap();
        assert_eq!(x.elements.len(), 2);
        assert!(x.warnings.is_empty());
        let plain = PayloadFormat::from_setting(Some("csv ( \"name\" )"));
        assert_eq!(plain, PayloadFormat::Csv { separator: b'\t', header: true });
        let y = parse_payload(b"name\nA\nA\nB\n", &plain).unwrap();
        assert_eq!(y.elements.len(), 2);
        assert_eq!(y.warnings.len(), 1);
    }

    #[test]
    fn python_strings() {
        assert_eq!(python_str("it's"), "\"it's\"");
        assert_eq!(python_str("a\nb"), "'a\\nb'");
        assert_eq!(python_str("Wrocław"), "'Wrocław'");
    }
}
