//! JSON config files: `{"schema": "bloodflow.<command>.v1", ...fields}`.
//! Missing fields take their defaults; unknown fields are rejected.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::UsageError;

pub const GENERATE_SCHEMA: &str = "bloodflow.generate.v1";
pub const SIMULATE_SCHEMA: &str = "bloodflow.simulate.v1";
pub const FORECAST_SCHEMA: &str = "bloodflow.forecast.v1";

pub fn load<T>(path: Option<&Path>, schema: &str) -> Result<T, UsageError>
where
    T: DeserializeOwned + Serialize + Default,
{
    let Some(path) = path else {
        return Ok(T::default());
    };
    let bad = |msg: String| UsageError(format!("{}: {msg}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let Value::Object(mut fields) = value else {
        return Err(bad("config must be a JSON object".into()));
    };
    match fields.remove("schema") {
        Some(Value::String(s)) if s == schema => {}
        Some(other) => return Err(bad(format!("schema must be {schema:?}, found {other}"))),
        None => return Err(bad(format!("missing \"schema\" field (expected {schema:?})"))),
    }
    if let Value::Object(known) = serde_json::to_value(T::default()).expect("defaults serialize") {
        if let Some(unknown) = fields.keys().find(|k| !known.contains_key(*k)) {
            let mut names: Vec<&String> = known.keys().collect();
            names.sort();
            return Err(bad(format!("unknown field {unknown:?}; known fields: {names:?}")));
        }
    }
    serde_json::from_value(Value::Object(fields)).map_err(|e| bad(e.to_string()))
}
