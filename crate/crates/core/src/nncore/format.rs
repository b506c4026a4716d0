//! Bit-exact model serialization.
//!
//! A `.nmm` file is a JSON manifest. Keys:
//!
//! - `format_version`: currently 1;
//! - `spec`: input shape, layer list and class count;
//! - `params`: one entry per parameterized layer with `weights`/`bias`
//!   blobs, each a shape plus base64 of the little-endian f32 values in
//!   row-major order;
//! - `checksum`: CRC32 over the concatenated decoded blob bytes, in file
//!   order.
//!
//! Loading verifies the version, then the checksum over the decoded
//! payload, then the structure. Corruption inside a blob therefore
//! surfaces as a checksum failure; a structurally broken manifest (bad
//! JSON, unknown layer kind, shape/length disagreement) surfaces as a
//! malformed-manifest error.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::layer::{ActivationFn, LayerKind, LayerSpec};
use crate::nncore::model::{ModelSpec, ParamPair, TrainedModel};
use crate::nncore::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_EXTENSION: &str = "nmm";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: SpecEntry,
    params: Vec<ParamEntry>,
    checksum: u32,
}

#[derive(Serialize, Deserialize)]
struct SpecEntry {
    input_shape: Vec<usize>,
    num_classes: usize,
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    activation: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    layer: usize,
    weights: BlobEntry,
    bias: BlobEntry,
}

#[derive(Serialize, Deserialize)]
struct BlobEntry {
    shape: Vec<usize>,
    data: String,
}

fn encode_blob(t: &Tensor) -> (BlobEntry, Vec<u8>) {
    let mut bytes = Vec::with_capacity(t.numel() * 4);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    (
        BlobEntry {
            shape: t.shape().to_vec(),
            data: BASE64.encode(&bytes),
        },
        bytes,
    )
}

fn decode_blob(entry: &BlobEntry) -> Result<(Tensor, Vec<u8>)> {
    let bytes = BASE64
        .decode(&entry.data)
        .map_err(|e| Error::MalformedManifest(format!("bad base64 blob: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::MalformedManifest(format!(
            "blob length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let tensor = Tensor::new(entry.shape.clone(), values)
        .map_err(|e| Error::MalformedManifest(format!("blob shape/data mismatch: {e}")))?;
    Ok((tensor, bytes))
}

fn layer_to_entry(layer: &LayerSpec) -> LayerEntry {
    let activation = match layer.activation {
        ActivationFn::Identity => None,
        f => Some(f.name().to_string()),
    };
    match layer.kind {
        LayerKind::Dense { input, output } => LayerEntry {
            kind: "dense".into(),
            dims: Some(vec![input, output]),
            activation,
        },
        LayerKind::Conv2D {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
        } => LayerEntry {
            kind: "conv2d".into(),
            dims: Some(vec![in_channels, out_channels, kernel_h, kernel_w]),
            activation,
        },
        LayerKind::MaxPool2x2 => LayerEntry {
            kind: "maxpool2x2".into(),
            dims: None,
            activation,
        },
        LayerKind::Flatten => LayerEntry {
            kind: "flatten".into(),
            dims: None,
            activation,
        },
        LayerKind::Activation(f) => LayerEntry {
            kind: "activation".into(),
            dims: None,
            activation: Some(f.name().to_string()),
        },
    }
}

fn parse_activation(name: &str) -> Result<ActivationFn> {
    match name {
        "identity" => Ok(ActivationFn::Identity),
        "relu" => Ok(ActivationFn::Relu),
        "softmax" => Ok(ActivationFn::Softmax),
        other => Err(Error::MalformedManifest(format!(
            "unknown activation function {other:?}"
        ))),
    }
}

fn entry_to_layer(entry: &LayerEntry) -> Result<LayerSpec> {
    let attr = match &entry.activation {
        None => ActivationFn::Identity,
        Some(name) => parse_activation(name)?,
    };
    let dims = entry.dims.as_deref().unwrap_or(&[]);
    match entry.kind.as_str() {
        "dense" => {
            let [input, output] = *dims else {
                return Err(Error::MalformedManifest(format!(
                    "dense layer needs dims [input, output], got {dims:?}"
                )));
            };
            Ok(LayerSpec::dense(input, output, attr))
        }
        "conv2d" => {
            let [ic, oc, kh, kw] = *dims else {
                return Err(Error::MalformedManifest(format!(
                    "conv2d layer needs dims [in_ch, out_ch, kh, kw], got {dims:?}"
                )));
            };
            Ok(LayerSpec::conv2d(ic, oc, kh, kw, attr))
        }
        "maxpool2x2" => Ok(LayerSpec::maxpool2x2()),
        "flatten" => Ok(LayerSpec::flatten()),
        "activation" => Ok(LayerSpec::activation(attr)),
        other => Err(Error::MalformedManifest(format!(
            "unknown layer kind {other:?}"
        ))),
    }
}

fn spec_to_entry(spec: &ModelSpec) -> SpecEntry {
    SpecEntry {
        input_shape: spec.input_shape.clone(),
        num_classes: spec.num_classes,
        layers: spec.layers.iter().map(layer_to_entry).collect(),
    }
}

fn entry_to_spec(entry: &SpecEntry) -> Result<ModelSpec> {
    let layers = entry
        .layers
        .iter()
        .map(entry_to_layer)
        .collect::<Result<Vec<_>>>()?;
    ModelSpec::new(entry.input_shape.clone(), layers, entry.num_classes)
        .map_err(|e| Error::MalformedManifest(format!("invalid spec: {e}")))
}

/// Serialize a model to its manifest string. Two calls on the same model
/// produce identical bytes.
pub fn to_manifest_string(model: &TrainedModel) -> String {
    let mut payload = Vec::new();
    let mut params = Vec::new();
    for (i, p) in model.params().iter().enumerate() {
        if let Some(pair) = p {
            let (w_entry, w_bytes) = encode_blob(&pair.weights);
            let (b_entry, b_bytes) = encode_blob(&pair.bias);
            payload.extend_from_slice(&w_bytes);
            payload.extend_from_slice(&b_bytes);
            params.push(ParamEntry {
                layer: i,
                weights: w_entry,
                bias: b_entry,
            });
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: spec_to_entry(model.spec()),
        params,
        checksum: crc32fast::hash(&payload),
    };
    serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail")
}

/// Parse a manifest string back into a model.
pub fn from_manifest_string(text: &str) -> Result<TrainedModel> {
    let manifest: Manifest = serde_json::from_str(text)
        .map_err(|e| Error::MalformedManifest(format!("bad JSON: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            supported: FORMAT_VERSION,
        });
    }
    // Decode every blob and verify the checksum before structural checks,
    // so payload corruption is reported as a checksum failure.
    let mut payload = Vec::new();
    let mut decoded = Vec::with_capacity(manifest.params.len());
    for entry in &manifest.params {
        let (w, w_bytes) = decode_blob(&entry.weights)?;
        let (b, b_bytes) = decode_blob(&entry.bias)?;
        payload.extend_from_slice(&w_bytes);
        payload.extend_from_slice(&b_bytes);
        decoded.push((entry.layer, w, b));
    }
    let computed = crc32fast::hash(&payload);
    if computed != manifest.checksum {
        return Err(Error::ChecksumMismatch {
            stored: manifest.checksum,
            computed,
        });
    }
    let spec = entry_to_spec(&manifest.spec)?;
    let mut params: Vec<Option<ParamPair>> = vec![None; spec.layers.len()];
    for (layer, weights, bias) in decoded {
        if layer >= params.len() {
            return Err(Error::MalformedManifest(format!(
                "parameter entry names layer {layer} but the spec has {} layers",
                params.len()
            )));
        }
        if params[layer].is_some() {
            return Err(Error::MalformedManifest(format!(
                "duplicate parameter entry for layer {layer}"
            )));
        }
        params[layer] = Some(ParamPair { weights, bias });
    }
    TrainedModel::new(spec, params)
        .map_err(|e| Error::MalformedManifest(format!("parameters do not match spec: {e}")))
}

/// Write a model to `path`.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_manifest_string(model))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a model from `path`.
pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_manifest_string(&text)
}

/// CRC32 over a model's parameter payload; used as its identity in
/// provenance records so artifacts stay relocatable.
pub fn model_checksum(model: &TrainedModel) -> u32 {
    let mut payload = Vec::new();
    for p in model.params().iter().flatten() {
        for v in p.weights.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for v in p.bias.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    crc32fast::hash(&payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_model(seed: u64) -> TrainedModel {
        let mut rng = crate::rng::stream(seed, "format-test-model");
        let hidden = rng.random_range(2..6);
        let classes = rng.random_range(2..5);
        let spec = ModelSpec::new(
            vec![3],
            vec![
                LayerSpec::dense(3, hidden, ActivationFn::Relu),
                LayerSpec::activation(ActivationFn::Relu),
                LayerSpec::dense(hidden, classes, ActivationFn::Softmax),
            ],
            classes,
        )
        .unwrap();
        let params = vec![
            Some(ParamPair {
                weights: Tensor::new(
                    vec![hidden, 3],
                    (0..hidden * 3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap(),
                bias: Tensor::new(
                    vec![hidden],
                    (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap(),
            }),
            None,
            Some(ParamPair {
                weights: Tensor::new(
                    vec![classes, hidden],
                    (0..classes * hidden)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect(),
                )
                .unwrap(),
                bias: Tensor::zeros(vec![classes]),
            }),
        ];
        TrainedModel::new(spec, params).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = random_model(1);
        let text = to_manifest_string(&model);
        let back = from_manifest_string(&text).unwrap();
        assert!(model.params_bit_eq(&back));
        assert_eq!(model.spec(), back.spec());
    }

    #[test]
    fn two_saves_are_byte_identical() {
        let model = random_model(2);
        assert_eq!(to_manifest_string(&model), to_manifest_string(&model));
    }

    #[test]
    fn version_mismatch_is_distinct() {
        let model = random_model(3);
        let text = to_manifest_string(&model).replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            from_manifest_string(&text),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn payload_corruption_is_checksum_failure() {
        let model = random_model(4);
        let mut text = to_manifest_string(&model);
        // Flip one character inside the first base64 blob.
        let marker = "\"data\": \"";
        let start = text.find(marker).unwrap() + marker.len();
        let original = text.as_bytes()[start] as char;
        let replacement = if original == 'A' { 'B' } else { 'A' };
        text.replace_range(start..start + 1, &replacement.to_string());
        assert!(matches!(
            from_manifest_string(&text),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_checksum_failure() {
        let model = random_model(5);
        let text = to_manifest_string(&model);
        // Drop one base64 quartet (4 chars = 3 bytes) from the last blob:
        // the manifest stays valid JSON but the payload is short.
        let marker = "\"data\": \"";
        let start = text.rfind(marker).unwrap() + marker.len();
        let end = text[start..].find('"').unwrap() + start;
        let mut truncated = text.clone();
        truncated.replace_range(end - 4..end, "");
        assert!(matches!(
            from_manifest_string(&truncated),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn unknown_layer_kind_is_malformed() {
        let model = random_model(6);
        let text = to_manifest_string(&model).replace("\"kind\": \"dense\"", "\"kind\": \"batchnorm\"");
        assert!(matches!(
            from_manifest_string(&text),
            Err(Error::MalformedManifest(_))
        ));
    }

    #[test]
    fn structural_truncation_is_malformed() {
        let model = random_model(7);
        let text = to_manifest_string(&model);
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            from_manifest_string(cut),
            Err(Error::MalformedManifest(_))
        ));
    }

    #[test]
    fn save_load_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.nmm");
        let model = random_model(8);
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert!(model.params_bit_eq(&back));
    }
}
