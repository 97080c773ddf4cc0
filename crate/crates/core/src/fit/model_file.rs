//! JSON model files: schema_version, optional asset names, mu, gamma, sigma
//! (rows), and a mixing block `{family, parameters}`. Reals are written with
//! 17 significant digits so a reload is bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::mixing::MixingLaw;
use crate::nmvm::NmvmModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: NmvmModel,
    pub assets: Option<Vec<String>>,
}

pub fn model_to_string(model: &NmvmModel, assets: Option<&[String]>) -> Result<String> {
    let mut root = Map::new();
    root.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    if let Some(a) = assets {
        if a.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: a.len(),
            });
        }
        root.insert("assets".into(), Value::from(a.to_vec()));
    }
    root.insert("mu".into(), Value::from(model.mu.as_slice().to_vec()));
    root.insert("gamma".into(), Value::from(model.gamma.as_slice().to_vec()));
    let rows: Vec<Value> = model
        .sigma
        .row_iter()
        .map(|r| Value::from(r.iter().copied().collect::<Vec<f64>>()))
        .collect();
    root.insert("sigma".into(), Value::Array(rows));
    let Value::Object(mut flat) = serde_json::to_value(model.mixing).map_err(|e| Error::Schema(e.to_string()))? else {
        return Err(Error::Schema("mixing law did not serialize to an object".into()));
    };
    let family = flat.remove("family").unwrap_or(Value::Null);
    let mut mixing = Map::new();
    mixing.insert("family".into(), family);
    mixing.insert("parameters".into(), Value::Object(flat));
    root.insert("mixing".into(), Value::Object(mixing));
    let mut out = String::new();
    write_value(&mut out, &Value::Object(root), 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, k: usize| out.extend(std::iter::repeat_n(' ', 2 * k));
    match v {
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (None, Some(i), _) => write!(out, "{i}").unwrap(),
            (_, _, Some(f)) => write!(out, "{f:.16e}").unwrap(),
            _ => write!(out, "{n}").unwrap(),
        },
        Value::Array(items) if items.iter().all(|i| !i.is_array() && !i.is_object()) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, indent);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                pad(out, indent + 1);
                write!(out, "{}: ", Value::String(key.clone())).unwrap();
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
        other => write!(out, "{other}").unwrap(),
    }
}

fn field<'a>(root: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    root.get(key).ok_or_else(|| Error::Schema(format!("missing `{key}` block")))
}

fn real_vec(v: &Value, key: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Schema(format!("`{key}` must be an array of reals")))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| Error::Schema(format!("`{key}` must contain only reals"))))
        .collect()
}

pub fn model_from_str(text: &str) -> Result<ModelFile> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let root = root
        .as_object()
        .ok_or_else(|| Error::Schema("model file must be a JSON object".into()))?;
    let version = field(root, "schema_version")?
        .as_u64()
        .ok_or_else(|| Error::Schema("`schema_version` must be a non-negative integer".into()))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION,
            found: u32::try_from(version).unwrap_or(u32::MAX),
        });
    }
    let mu = real_vec(field(root, "mu")?, "mu")?;
    let gamma = real_vec(field(root, "gamma")?, "gamma")?;
    let rows = field(root, "sigma")?
        .as_array()
        .ok_or_else(|| Error::Schema("`sigma` must be an array of rows".into()))?
        .iter()
        .map(|r| real_vec(r, "sigma"))
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Schema("`sigma` must be square".into()));
    }
    let sigma = DMatrix::from_fn(n, n, |i, j| rows[i][j]);

    let mixing = field(root, "mixing")?
        .as_object()
        .ok_or_else(|| Error::Schema("`mixing` must be an object".into()))?;
    let mut flat = match mixing.get("parameters") {
        Some(Value::Object(p)) => p.clone(),
        Some(Value::Null) | None => Map::new(),
        Some(_) => return Err(Error::Schema("`mixing.parameters` must be an object".into())),
    };
    flat.insert(
        "family".into(),
        mixing
            .get("family")
            .cloned()
            .ok_or_else(|| Error::Schema("missing `mixing.family`".into()))?,
    );
    let law: MixingLaw =
        serde_json::from_value(Value::Object(flat)).map_err(|e| Error::Schema(format!("mixing: {e}")))?;
    law.validate()?;

    let assets = match root.get("assets") {
        None | Some(Value::Null) => None,
        Some(Value::Array(a)) => Some(
            a.iter()
                .map(|s| s.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Schema("`assets` must be strings".into()))?,
        ),
        Some(_) => return Err(Error::Schema("`assets` must be an array".into())),
    };
    if let Some(a) = &assets {
        if a.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.len() });
        }
    }
    let model = NmvmModel::new(DVector::from_vec(mu), DVector::from_vec(gamma), sigma, law)?;
    Ok(ModelFile { model, assets })
}

pub fn save_model(path: impl AsRef<Path>, model: &NmvmModel, assets: Option<&[String]>) -> Result<()> {
    std::fs::write(path, model_to_string(model, assets)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    model_from_str(&std::fs::read_to_string(path)?)
}
