//! Versioned model files.
//!
//! `model.json` holds the model as JSON with every numeric array longer than
//! [`INLINE_LIMIT`] replaced by a reference into `model.bin`:
//!
//! ```json
//! {"$sidecar": {"offset": 128, "len": 4096, "dtype": "f64"}}
//! ```
//!
//! `model.bin` is a flat sequence of little-endian 8-byte values (`f64` or
//! `i64` per `dtype`); `offset` and `len` count values, not bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{FittedModel, ModelError, Result, MODEL_FORMAT_VERSION};

pub const INLINE_LIMIT: usize = 16;
const FORMAT: &str = "gridcast-model";

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    sidecar_values: usize,
    model: Value,
}

fn err<E: std::fmt::Display>(e: E) -> ModelError {
    ModelError::Serialization(e.to_string())
}

fn extract(v: &mut Value, bin: &mut Vec<u8>, count: &mut usize) {
    match v {
        Value::Array(items) => {
            let numeric = items.len() > INLINE_LIMIT && items.iter().all(Value::is_number);
            if numeric {
                let ints = items.iter().all(|x| x.is_i64());
                let offset = *count;
                for x in items.iter() {
                    if ints {
                        bin.extend_from_slice(&x.as_i64().expect("checked").to_le_bytes());
                    } else {
                        bin.extend_from_slice(&x.as_f64().expect("number").to_le_bytes());
                    }
                }
                *count += items.len();
                let dtype = if ints { "i64" } else { "f64" };
                *v = json!({"$sidecar": {"offset": offset, "len": items.len(), "dtype": dtype}});
            } else {
                items.iter_mut().for_each(|x| extract(x, bin, count));
            }
        }
        Value::Object(map) => map.values_mut().for_each(|x| extract(x, bin, count)),
        _ => {}
    }
}

fn restore(v: &mut Value, bin: &[u8]) -> Result<()> {
    match v {
        Value::Array(items) => items.iter_mut().try_for_each(|x| restore(x, bin)),
        Value::Object(map) => {
            if map.len() == 1 && map.contains_key("$sidecar") {
                let r = &map["$sidecar"];
                let offset = r["offset"].as_u64().ok_or_else(|| err("sidecar offset"))? as usize;
                let len = r["len"].as_u64().ok_or_else(|| err("sidecar len"))? as usize;
                let end = (offset + len) * 8;
                if end > bin.len() {
                    return Err(err(format!("sidecar holds {} values, reference needs {}", bin.len() / 8, offset + len)));
                }
                let chunk = bin[offset * 8..end].chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).expect("8 bytes"));
                let items: Vec<Value> = match r["dtype"].as_str() {
                    Some("i64") => chunk.map(|b| Value::from(i64::from_le_bytes(b))).collect(),
                    Some("f64") => chunk
                        .map(|b| serde_json::Number::from_f64(f64::from_le_bytes(b)).map(Value::Number).ok_or_else(|| err("non-finite value")))
                        .collect::<Result<_>>()?,
                    other => return Err(err(format!("unknown sidecar dtype {other:?}"))),
                };
                *v = Value::Array(items);
                Ok(())
            } else {
                map.values_mut().try_for_each(|x| restore(x, bin))
            }
        }
        _ => Ok(()),
    }
}

/// JSON text and sidecar bytes for a model.
pub fn model_to_parts(model: &FittedModel) -> Result<(String, Vec<u8>)> {
    let mut value = serde_json::to_value(model).map_err(err)?;
    let mut bin = Vec::new();
    let mut count = 0;
    extract(&mut value, &mut bin, &mut count);
    let env = Envelope { format: FORMAT.into(), version: MODEL_FORMAT_VERSION, sidecar_values: count, model: value };
    Ok((serde_json::to_string_pretty(&env).map_err(err)? + "\n", bin))
}

pub fn model_from_parts(json_text: &str, sidecar: &[u8]) -> Result<FittedModel> {
    let env: Envelope = serde_json::from_str(json_text).map_err(err)?;
    if env.format != FORMAT || env.version != MODEL_FORMAT_VERSION {
        return Err(err(format!("unsupported model format {} v{}", env.format, env.version)));
    }
    if sidecar.len() != env.sidecar_values * 8 {
        return Err(err(format!("sidecar has {} bytes, expected {}", sidecar.len(), env.sidecar_values * 8)));
    }
    let mut value = env.model;
    restore(&mut value, sidecar)?;
    serde_json::from_value(value).map_err(err)
}

/// Writes `model.json` and `model.bin` into `dir`.
pub fn save_model(model: &FittedModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(err)?;
    let (text, bin) = model_to_parts(model)?;
    fs::write(dir.join("model.json"), text).map_err(err)?;
    fs::write(dir.join("model.bin"), bin).map_err(err)?;
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<FittedModel> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join("model.json")).map_err(err)?;
    let bin = fs::read(dir.join("model.bin")).map_err(err)?;
    model_from_parts(&text, &bin)
}
