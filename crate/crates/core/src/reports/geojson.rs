//! Annotates a GeoJSON feature collection with per-area estimates.

use std::collections::HashMap;

use serde_json::{Map, Value};

use crate::error::ReportError;

/// What gets attached to one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoEstimate {
    pub area_id: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Contribution shares in dimension order; empty for univariate fits.
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotated {
    pub collection: Value,
    /// Features whose key matched no estimate.
    pub unmatched_features: Vec<String>,
    /// Estimates whose area matched no feature.
    pub unmatched_estimates: Vec<String>,
}

/// Property name for the share of dimension `name`, e.g. `md` -> `MD_C`.
pub fn share_property(name: &str) -> String {
    format!("{}_C", name.to_uppercase())
}

fn key_of(properties: &Value, key: &str) -> Option<String> {
    match properties.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

/// Adds `estimate`, `se`, `ci_low`, `ci_high` and one `<DIM>_C` share per dimension to the
/// properties of every feature, keyed by `properties[key]`. Features without a matching
/// estimate get the same properties set to null. Geometry and other members are untouched.
pub fn emit_geojson(
    input: &Value,
    estimates: &[GeoEstimate],
    dimension_names: &[String],
    key: &str,
) -> Result<Annotated, ReportError> {
    let bad = |m: &str| ReportError::MalformedGeoJson(m.to_string());
    let obj = input.as_object().ok_or_else(|| bad("top level is not an object"))?;
    if obj.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("type is not FeatureCollection"));
    }
    let features = obj.get("features").and_then(Value::as_array).ok_or_else(|| bad("features is not an array"))?;

    let by_area: HashMap<&str, &GeoEstimate> = estimates.iter().map(|e| (e.area_id.as_str(), e)).collect();
    let share_names: Vec<String> = dimension_names.iter().map(|d| share_property(d)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut unmatched_features = Vec::new();
    let mut out_features = Vec::with_capacity(features.len());

    for (j, feature) in features.iter().enumerate() {
        let f = feature.as_object().ok_or_else(|| bad(&format!("feature {j} is not an object")))?;
        if f.get("type").and_then(Value::as_str) != Some("Feature") {
            return Err(bad(&format!("feature {j} has type other than Feature")));
        }
        let mut props = match f.get("properties") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(p)) => p.clone(),
            Some(_) => return Err(bad(&format!("feature {j} properties is not an object"))),
        };
        let id = key_of(&Value::Object(props.clone()), key);
        let est = id.as_deref().and_then(|id| by_area.get(id));
        match est {
            Some(e) => {
                seen.insert(e.area_id.as_str());
                props.insert("estimate".into(), number(e.estimate));
                props.insert("se".into(), number(e.se));
                props.insert("ci_low".into(), number(e.ci_low));
                props.insert("ci_high".into(), number(e.ci_high));
                for (k, name) in share_names.iter().enumerate() {
                    props.insert(name.clone(), e.shares.get(k).map_or(Value::Null, |&s| number(s)));
                }
            }
            None => {
                unmatched_features.push(id.unwrap_or_else(|| format!("#{j}")));
                for name in ["estimate", "se", "ci_low", "ci_high"].into_iter().map(String::from).chain(share_names.iter().cloned()) {
                    props.insert(name, Value::Null);
                }
            }
        }
        let mut f = f.clone();
        f.insert("properties".into(), Value::Object(props));
        out_features.push(Value::Object(f));
    }

    let unmatched_estimates = estimates.iter().filter(|e| !seen.contains(e.area_id.as_str())).map(|e| e.area_id.clone()).collect();
    let mut out = obj.clone();
    out.insert("features".into(), Value::Array(out_features));
    Ok(Annotated { collection: Value::Object(out), unmatched_features, unmatched_estimates })
}
