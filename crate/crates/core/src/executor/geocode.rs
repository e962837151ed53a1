//! Place-name lookup for `{{geocode...}}` macros.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ExecError;
use crate::metrics::OsmKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeocodeHit {
    pub kind: OsmKind,
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
}

impl GeocodeHit {
    /// Overpass area id of the object, if it can bound an area.
    pub fn area_id(&self) -> Option<u64> {
        match self.kind {
            OsmKind::Relation => Some(3_600_000_000 + self.id),
            OsmKind::Way => Some(2_400_000_000 + self.id),
            OsmKind::Area => Some(self.id),
            OsmKind::Node => None,
        }
    }
}

pub trait GeocodeResolver: Send + Sync {
    fn resolve(&self, name: &str) -> Result<Option<GeocodeHit>, ExecError>;
}

/// Resolver backed by a `name<TAB>kind<TAB>id<TAB>lat<TAB>lon` table.
#[derive(Debug, Clone, Default)]
pub struct FixtureResolver {
    entries: HashMap<String, GeocodeHit>,
}

impl FixtureResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, hit: GeocodeHit) {
        self.entries.insert(name.to_string(), hit);
    }

    pub fn from_tsv(text: &str) -> Result<Self, ExecError> {
        let mut r = FixtureResolver::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| ExecError::Geocoder(format!("geocodes line {}: {what}", i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad("expected 5 tab-separated columns"));
            }
            let kind = OsmKind::from_name(cols[1]).ok_or_else(|| bad("unknown element kind"))?;
            let id = cols[2].parse().map_err(|_| bad("invalid id"))?;
            let lat = cols[3].parse().map_err(|_| bad("invalid lat"))?;
            let lon = cols[4].parse().map_err(|_| bad("invalid lon"))?;
            r.insert(cols[0], GeocodeHit { kind, id, lat, lon });
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, ExecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExecError::Geocoder(format!("{}: {e}", path.display())))?;
        Self::from_tsv(&text)
    }
}

impl GeocodeResolver for FixtureResolver {
    fn resolve(&self, name: &str) -> Result<Option<GeocodeHit>, ExecError> {
        Ok(self.entries.get(name).copied())
    }
}

/// Resolver querying a Nominatim-style `/search` endpoint.
#[derive(Debug, Clone)]
pub struct NominatimResolver {
    pub base_url: String,
    pub timeout: Duration,
}

#[derive(Deserialize)]
struct NominatimPlace {
    osm_type: String,
    osm_id: u64,
    lat: String,
    lon: String,
}

impl NominatimResolver {
    pub fn new(base_url: impl Into<String>) -> Self {
        NominatimResolver { base_url: base_url.into(), timeout: Duration::from_secs(30) }
    }
}

impl GeocodeResolver for NominatimResolver {
    fn resolve(&self, name: &str) -> Result<Option<GeocodeHit>, ExecError> {
        let url = format!("{}/search", self.base_url.trim_end_matches('/'));
        let places: Vec<NominatimPlace> = ureq::get(&url)
            .timeout(self.timeout)
            .query("q", name)
            .query("format", "json")
            .query("limit", "5")
            .call()
            .map_err(|e| ExecError::Geocoder(e.to_string()))?
            .into_json()
            .map_err(|e| ExecError::Geocoder(e.to_string()))?;
        Ok(places.into_iter().find_map(|p| {
            Some(GeocodeHit {
                kind: OsmKind::from_name(&p.osm_type)?,
                id: p.osm_id,
                lat: p.lat.parse().ok()?,
                lon: p.lon.parse().ok()?,
            })
        }))
    }
}
