//! Expansion of Overpass Turbo `{{...}}` shortcuts into plain OverpassQL.

use std::collections::HashMap;

use chrono::{Duration as ChronoDuration, Utc};

use super::geocode::GeocodeResolver;
use super::ExecError;
use crate::ast::{MacroKind, TurboMacro};
use crate::lexer::{tokenize, TokenKind};

/// Replaces every turbo macro in `text`. Text that does not tokenize is
/// returned unchanged so the server can report the error.
pub fn expand_macros(text: &str, bbox: [f64; 4], resolver: &dyn GeocodeResolver) -> Result<String, ExecError> {
    let Ok(tokens) = tokenize(text) else {
        return Ok(text.to_string());
    };
    if !tokens.iter().any(|t| t.kind == TokenKind::TurboMacro) {
        return Ok(text.to_string());
    }
    let mut definitions: HashMap<String, String> = HashMap::new();
    let mut out = String::with_capacity(text.len());
    for t in &tokens {
        if t.kind != TokenKind::TurboMacro {
            out.push_str(&t.lexeme);
            continue;
        }
        let m = TurboMacro::from_lexeme(&t.lexeme);
        out.push_str(&expand_one(&m, bbox, resolver, &mut definitions)?);
    }
    Ok(out)
}

fn required_arg(m: &TurboMacro) -> Result<&str, ExecError> {
    m.argument.as_deref().ok_or_else(|| ExecError::UnknownMacro(m.raw.clone()))
}

fn expand_one(
    m: &TurboMacro,
    bbox: [f64; 4],
    resolver: &dyn GeocodeResolver,
    definitions: &mut HashMap<String, String>,
) -> Result<String, ExecError> {
    let resolve = |name: &str| {
        resolver.resolve(name)?.ok_or_else(|| ExecError::GeocodeNotFound(name.to_string()))
    };
    match m.kind {
        MacroKind::Bbox => Ok(format!("{:?},{:?},{:?},{:?}", bbox[0], bbox[1], bbox[2], bbox[3])),
        MacroKind::GeocodeArea => {
            let name = required_arg(m)?;
            let hit = resolve(name)?;
            let id = hit.area_id().ok_or_else(|| ExecError::GeocodeNotFound(name.to_string()))?;
            Ok(format!("area({id})"))
        }
        MacroKind::GeocodeId => {
            let hit = resolve(required_arg(m)?)?;
            Ok(format!("{}({})", hit.kind.as_str(), hit.id))
        }
        MacroKind::GeocodeCoords => {
            let hit = resolve(required_arg(m)?)?;
            Ok(format!("{:?},{:?}", hit.lat, hit.lon))
        }
        MacroKind::Other => {
            if let Some((name, value)) = m.raw[2..m.raw.len() - 2].split_once('=') {
                if m.argument.is_none() {
                    definitions.insert(name.trim().to_string(), value.trim().to_string());
                    return Ok(String::new());
                }
            }
            match m.name.as_str() {
                "style" | "data" => Ok(String::new()),
                "center" => Ok(format!("{:?},{:?}", (bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0)),
                "date" => date_macro(m.argument.as_deref()).ok_or_else(|| ExecError::UnknownMacro(m.raw.clone())),
                name => definitions.get(name).cloned().ok_or_else(|| ExecError::UnknownMacro(m.raw.clone())),
            }
        }
    }
}

/// `{{date}}` is the current UTC time; `{{date:3 days}}` lies that far back.
fn date_macro(arg: Option<&str>) -> Option<String> {
    let offset = match arg {
        None => ChronoDuration::zero(),
        Some(a) => {
            let mut parts = a.split_whitespace();
            let n: i64 = parts.next()?.parse().ok()?;
            let unit = parts.next().unwrap_or("days").trim_end_matches('s');
            let secs = match unit {
                "second" => 1,
                "minute" => 60,
                "hour" => 3600,
                "day" => 86_400,
                "week" => 7 * 86_400,
                "month" => 30 * 86_400,
                "year" => 365 * 86_400,
                _ => return None,
            };
            ChronoDuration::seconds(n * secs)
        }
    };
    Some((Utc::now() - offset).format("%Y-%m-%dT%H:%M:%SZ").to_string())
}
