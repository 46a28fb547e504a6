use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    kind: &'static str,
    model: &'a Model,
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
}

#[derive(Deserialize)]
struct OwnedEnvelope {
    model: Model,
}

/// Self-describing JSON. Floats are written in shortest round-trip form,
/// so a reloaded model predicts bit-identically.
pub fn model_to_json(model: &Model) -> String {
    let env = Envelope {
        schema_version: MODEL_SCHEMA_VERSION,
        kind: model.kind().name(),
        model,
    };
    serde_json::to_string(&env).expect("models are always serializable") + "\n"
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let header: Header = serde_json::from_str(text)?;
    if header.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: header.schema_version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let env: OwnedEnvelope = serde_json::from_str(text)?;
    Ok(env.model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path.as_ref(), model_to_json(model).as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Feature, FeatureTable};
    use crate::models::{fit_model, ModelKind, ModelSpec};

    #[test]
    fn schema_mismatch_is_rejected() {
        let rows: Vec<f64> = (0..12).map(|i| i as f64 * 0.37).collect();
        let x = FeatureTable::new(vec![Feature::NAodM], rows).unwrap();
        let y: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let m = fit_model(&ModelSpec::new(ModelKind::Univariate), &x, &y).unwrap();
        let text = model_to_json(&m).replace("\"schema_version\":1", "\"schema_version\":99");
        match model_from_json(&text) {
            Err(Error::SchemaVersion {
                found: 99,
                expected: 1,
            }) => {}
            other => panic!("{other:?}"),
        }
        assert_eq!(model_from_json(&model_to_json(&m)).unwrap(), m);
    }
}
