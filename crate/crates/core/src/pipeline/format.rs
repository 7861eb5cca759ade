//! The `.tnt` quantized-model file format.
//!
//! Layout: magic `TNT1` (4 bytes), u32 little-endian header length, a JSON
//! header (manifest, config echo, per-layer offsets and stats), then one
//! body section per layer: the packed 2-bit code stream followed by the
//! scalar stream (raw little-endian f32s, lambda_p before lambda_n for dual
//! vectors). Skipped layers store their original float payload verbatim.
//! All multi-byte integers are little-endian. Under a dual-scalar config,
//! vectors that fell back to a single scalar are flagged by index in the
//! header so the per-vector scalar count stays decodable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pack::packed_len;
use super::{ConfigEcho, PipelineError, ScalarMode};
use crate::pipeline::{LayerRole, ModelManifest};
use crate::scalar::ScalarSet;
use crate::tensor::{DecomposeStrategy, Dtype, TensorShape};

pub const TNT_MAGIC: &[u8; 4] = b"TNT1";
pub const FORMAT_VERSION: u32 = 1;

/// Per-layer similarity statistics embedded in the header. `None` when every
/// vector in the layer was degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub mean_cosine: Option<f64>,
    pub min_cosine: Option<f64>,
    pub mean_nonzero_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    pub strategy: DecomposeStrategy,
    pub vector_count: usize,
    pub vector_len: usize,
    /// Packed 2-bit codes for all vectors, contiguous in vector order;
    /// padding only at the end of the layer stream.
    pub codes: Vec<u8>,
    /// One scalar set per vector, already rounded to f32 precision.
    pub scalars: Vec<ScalarSet>,
    /// Indices of all-zero target vectors emitted as all-zero code blocks.
    pub degenerate: Vec<u32>,
    pub stats: LayerStats,
}

impl QuantizedBlock {
    pub fn code_count(&self) -> usize {
        self.vector_count * self.vector_len
    }

    pub fn scalar_value_count(&self) -> usize {
        self.scalars.iter().map(ScalarSet::count).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerPayload {
    Quantized(QuantizedBlock),
    /// Raw little-endian float payload of a skipped layer, byte-identical to
    /// the input container.
    Verbatim(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub name: String,
    pub index: usize,
    pub shape: TensorShape,
    pub dtype: Dtype,
    pub role: LayerRole,
    pub payload: LayerPayload,
}

impl QuantizedLayer {
    pub fn is_quantized(&self) -> bool {
        matches!(self.payload, LayerPayload::Quantized(_))
    }
}

/// A fully decoded quantized model: ordered layers of packed codes plus
/// scalars, with the global header fields.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: ConfigEcho,
    pub source_digest: String,
    pub layers: Vec<QuantizedLayer>,
}

impl QuantizedModel {
    pub fn manifest(&self) -> ModelManifest {
        ModelManifest {
            layers: self
                .layers
                .iter()
                .map(|l| super::LayerInfo {
                    name: l.name.clone(),
                    index: l.index,
                    shape: l.shape.clone(),
                    dtype: l.dtype,
                    role: l.role,
                })
                .collect(),
            source_digest: self.source_digest.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderDoc {
    format_version: u32,
    config: ConfigEcho,
    source_digest: String,
    layers: Vec<HeaderLayer>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLayer {
    name: String,
    index: usize,
    shape: TensorShape,
    dtype: Dtype,
    role: LayerRole,
    /// Section start relative to the end of the header.
    offset: u64,
    #[serde(flatten)]
    payload: HeaderPayload,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum HeaderPayload {
    Quantized {
        strategy: DecomposeStrategy,
        vector_count: usize,
        vector_len: usize,
        code_bytes: u64,
        scalar_values: u64,
        /// Vectors storing one scalar under a dual config.
        fallback: Vec<u32>,
        degenerate: Vec<u32>,
        stats: LayerStats,
    },
    Verbatim {
        byte_len: u64,
    },
}

/// Serialize a model to its on-disk byte image. Output is a pure function of
/// the model so repeated writes are byte-identical.
pub fn to_bytes(model: &QuantizedModel) -> Result<Vec<u8>, PipelineError> {
    let mut header_layers = Vec::with_capacity(model.layers.len());
    let mut offset = 0u64;
    for layer in &model.layers {
        let payload = match &layer.payload {
            LayerPayload::Quantized(block) => {
                let fallback: Vec<u32> = if model.config.scalars == ScalarMode::Dual {
                    block
                        .scalars
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.count() == 1)
                        .map(|(i, _)| i as u32)
                        .collect()
                } else {
                    Vec::new()
                };
                HeaderPayload::Quantized {
                    strategy: block.strategy,
                    vector_count: block.vector_count,
                    vector_len: block.vector_len,
                    code_bytes: block.codes.len() as u64,
                    scalar_values: block.scalar_value_count() as u64,
                    fallback,
                    degenerate: block.degenerate.clone(),
                    stats: block.stats,
                }
            }
            LayerPayload::Verbatim(raw) => HeaderPayload::Verbatim {
                byte_len: raw.len() as u64,
            },
        };
        let section_len = match &layer.payload {
            LayerPayload::Quantized(block) => {
                block.codes.len() as u64 + 4 * block.scalar_value_count() as u64
            }
            LayerPayload::Verbatim(raw) => raw.len() as u64,
        };
        header_layers.push(HeaderLayer {
            name: layer.name.clone(),
            index: layer.index,
            shape: layer.shape.clone(),
            dtype: layer.dtype,
            role: layer.role,
            offset,
            payload,
        });
        offset += section_len;
    }

    let header = serde_json::to_string(&HeaderDoc {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        source_digest: model.source_digest.clone(),
        layers: header_layers,
    })?;

    let mut out = Vec::with_capacity(8 + header.len() + offset as usize);
    out.extend_from_slice(TNT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for layer in &model.layers {
        match &layer.payload {
            LayerPayload::Quantized(block) => {
                out.extend_from_slice(&block.codes);
                for s in &block.scalars {
                    match *s {
                        ScalarSet::None => {}
                        ScalarSet::Single { lambda } => {
                            out.extend_from_slice(&(lambda as f32).to_le_bytes());
                        }
                        ScalarSet::Dual { lambda_p, lambda_n } => {
                            out.extend_from_slice(&(lambda_p as f32).to_le_bytes());
                            out.extend_from_slice(&(lambda_n as f32).to_le_bytes());
                        }
                    }
                }
            }
            LayerPayload::Verbatim(raw) => out.extend_from_slice(raw),
        }
    }
    Ok(out)
}

pub fn write_quantized(
    path: impl AsRef<Path>,
    model: &QuantizedModel,
) -> Result<(), PipelineError> {
    std::fs::write(path, to_bytes(model)?)?;
    Ok(())
}

/// Check a packed stream without materializing the codes: every used slot
/// must avoid bit pattern 11 and every padding slot must be zero.
fn validate_packed(bytes: &[u8], count: usize) -> Result<(), PipelineError> {
    if count > bytes.len() * 4 {
        return Err(PipelineError::CodeCountMismatch {
            requested: count,
            available: bytes.len() * 4,
        });
    }
    for (byte_index, &byte) in bytes.iter().enumerate() {
        for slot in 0..4 {
            let index = byte_index * 4 + slot;
            let bits = (byte >> (slot * 2)) & 0b11;
            if index < count {
                if bits == 0b11 {
                    return Err(PipelineError::InvalidCode { bits, index });
                }
            } else if bits != 0 {
                return Err(PipelineError::InvalidCode { bits, index });
            }
        }
    }
    Ok(())
}

pub fn from_bytes(bytes: &[u8]) -> Result<QuantizedModel, PipelineError> {
    if bytes.len() < 8 {
        return Err(PipelineError::Parse {
            offset: bytes.len() as u64,
            reason: "file truncated before header".to_string(),
        });
    }
    if &bytes[..3] != b"TNT" {
        return Err(PipelineError::Parse {
            offset: 0,
            reason: "bad magic, expected TNT1".to_string(),
        });
    }
    if bytes[..4] != *TNT_MAGIC {
        return Err(PipelineError::VersionMismatch {
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body_start = 8 + header_len;
    if bytes.len() < body_start {
        return Err(PipelineError::Parse {
            offset: bytes.len() as u64,
            reason: format!("header claims {header_len} bytes but file ends early"),
        });
    }
    let doc: HeaderDoc =
        serde_json::from_slice(&bytes[8..body_start]).map_err(|e| PipelineError::Parse {
            offset: 8,
            reason: format!("bad JSON header: {e}"),
        })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(PipelineError::VersionMismatch {
            found: format!("header format_version {}", doc.format_version),
        });
    }

    let body = &bytes[body_start..];
    let mut expected_offset = 0u64;
    let mut layers = Vec::with_capacity(doc.layers.len());
    for hl in doc.layers {
        if hl.offset != expected_offset {
            return Err(PipelineError::Parse {
                offset: body_start as u64 + expected_offset,
                reason: format!(
                    "layer {:?} offset {} does not follow previous section (expected {})",
                    hl.name, hl.offset, expected_offset
                ),
            });
        }
        let take = |len: u64| -> Result<&[u8], PipelineError> {
            let start = hl.offset as usize;
            let end = start + len as usize;
            body.get(start..end).ok_or_else(|| PipelineError::Parse {
                offset: bytes.len() as u64,
                reason: format!("layer {:?} section truncated", hl.name),
            })
        };
        let payload = match hl.payload {
            HeaderPayload::Verbatim { byte_len } => {
                expected_offset += byte_len;
                LayerPayload::Verbatim(take(byte_len)?.to_vec())
            }
            HeaderPayload::Quantized {
                strategy,
                vector_count,
                vector_len,
                code_bytes,
                scalar_values,
                fallback,
                degenerate,
                stats,
            } => {
                let code_count = vector_count * vector_len;
                if code_bytes as usize != packed_len(code_count) {
                    return Err(PipelineError::Parse {
                        offset: body_start as u64 + hl.offset,
                        reason: format!(
                            "layer {:?}: {code_bytes} code bytes for {code_count} codes",
                            hl.name
                        ),
                    });
                }
                let section = take(code_bytes + 4 * scalar_values)?;
                let codes = &section[..code_bytes as usize];
                validate_packed(codes, code_count)?;

                let mut scalar_bytes = &section[code_bytes as usize..];
                let mut next_f32 = || -> Result<f64, PipelineError> {
                    let (head, rest) =
                        scalar_bytes
                            .split_first_chunk::<4>()
                            .ok_or_else(|| PipelineError::Parse {
                                offset: bytes.len() as u64,
                                reason: format!("layer {:?} scalar stream truncated", hl.name),
                            })?;
                    scalar_bytes = rest;
                    Ok(f64::from(f32::from_le_bytes(*head)))
                };
                let mut scalars = Vec::with_capacity(vector_count);
                let mut fallback_iter = fallback.iter().peekable();
                for v in 0..vector_count as u32 {
                    let set = match doc.config.scalars {
                        ScalarMode::None => ScalarSet::None,
                        ScalarMode::Single => ScalarSet::Single { lambda: next_f32()? },
                        ScalarMode::Dual => {
                            if fallback_iter.peek() == Some(&&v) {
                                fallback_iter.next();
                                ScalarSet::Single { lambda: next_f32()? }
                            } else {
                                ScalarSet::Dual {
                                    lambda_p: next_f32()?,
                                    lambda_n: next_f32()?,
                                }
                            }
                        }
                    };
                    scalars.push(set);
                }
                expected_offset += code_bytes + 4 * scalar_values;

                let block = QuantizedBlock {
                    strategy,
                    vector_count,
                    vector_len,
                    codes: codes.to_vec(),
                    scalars,
                    degenerate,
                    stats,
                };
                if block.scalar_value_count() as u64 != scalar_values {
                    return Err(PipelineError::Parse {
                        offset: body_start as u64 + hl.offset + code_bytes,
                        reason: format!(
                            "layer {:?}: scalar stream holds {scalar_values} values, config implies {}",
                            hl.name,
                            block.scalar_value_count()
                        ),
                    });
                }
                LayerPayload::Quantized(block)
            }
        };
        layers.push(QuantizedLayer {
            name: hl.name,
            index: hl.index,
            shape: hl.shape,
            dtype: hl.dtype,
            role: hl.role,
            payload,
        });
    }
    if body.len() as u64 != expected_offset {
        return Err(PipelineError::Parse {
            offset: body_start as u64 + expected_offset,
            reason: format!(
                "{} trailing bytes after the last layer section",
                body.len() as u64 - expected_offset
            ),
        });
    }
    Ok(QuantizedModel {
        config: doc.config,
        source_digest: doc.source_digest,
        layers,
    })
}

pub fn read_quantized(path: impl AsRef<Path>) -> Result<QuantizedModel, PipelineError> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::pack::pack_codes;
    use crate::ternary::Mode;

    fn sample_model(scalars: ScalarMode) -> QuantizedModel {
        let codes = pack_codes(&[1, -1, 0, 1, 0, 0, -1, 1, 1, 0, 0, -1]).unwrap();
        let scalar_sets = match scalars {
            ScalarMode::None => vec![ScalarSet::None; 3],
            ScalarMode::Single => vec![
                ScalarSet::Single { lambda: 0.5 },
                ScalarSet::Single { lambda: 1.5 },
                ScalarSet::Single { lambda: 2.5 },
            ],
            ScalarMode::Dual => vec![
                ScalarSet::Dual { lambda_p: 0.5, lambda_n: 0.25 },
                ScalarSet::Single { lambda: 1.5 },
                ScalarSet::Dual { lambda_p: 2.0, lambda_n: 1.0 },
            ],
        };
        QuantizedModel {
            config: ConfigEcho {
                mode: Mode::Ternary,
                scalars,
                strategy: DecomposeStrategy::RowWise,
                skip_layers: vec!["head".to_string()],
                include_biases: false,
            },
            source_digest: "ab".repeat(32),
            layers: vec![
                QuantizedLayer {
                    name: "dense".to_string(),
                    index: 0,
                    shape: TensorShape::new(vec![3, 4]).unwrap(),
                    dtype: Dtype::F32,
                    role: LayerRole::Dense,
                    payload: LayerPayload::Quantized(QuantizedBlock {
                        strategy: DecomposeStrategy::RowWise,
                        vector_count: 3,
                        vector_len: 4,
                        codes,
                        scalars: scalar_sets,
                        degenerate: vec![],
                        stats: LayerStats {
                            mean_cosine: Some(0.91),
                            min_cosine: Some(0.88),
                            mean_nonzero_fraction: Some(0.58),
                        },
                    }),
                },
                QuantizedLayer {
                    name: "head".to_string(),
                    index: 1,
                    shape: TensorShape::new(vec![2]).unwrap(),
                    dtype: Dtype::F32,
                    role: LayerRole::Bias,
                    payload: LayerPayload::Verbatim(vec![1, 2, 3, 4, 5, 6, 7, 8]),
                },
            ],
        }
    }

    #[test]
    fn round_trip_all_scalar_modes() {
        for scalars in [ScalarMode::None, ScalarMode::Single, ScalarMode::Dual] {
            let model = sample_model(scalars);
            let bytes = to_bytes(&model).unwrap();
            assert_eq!(&bytes[..4], TNT_MAGIC);
            let back = from_bytes(&bytes).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn repeated_writes_are_byte_identical() {
        let model = sample_model(ScalarMode::Dual);
        assert_eq!(to_bytes(&model).unwrap(), to_bytes(&model).unwrap());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let model = sample_model(ScalarMode::Single);
        let mut bytes = to_bytes(&model).unwrap();
        bytes[3] = b'9';
        match from_bytes(&bytes).unwrap_err() {
            PipelineError::VersionMismatch { found } => assert_eq!(found, "TNT9"),
            other => panic!("expected VersionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_parse_error() {
        assert!(matches!(
            from_bytes(b"NOPE....").unwrap_err(),
            PipelineError::Parse { offset: 0, .. }
        ));
    }

    #[test]
    fn truncated_body_is_parse_error() {
        let model = sample_model(ScalarMode::Single);
        let mut bytes = to_bytes(&model).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            from_bytes(&bytes).unwrap_err(),
            PipelineError::Parse { .. }
        ));
    }

    #[test]
    fn corrupted_code_stream_is_invalid_code() {
        let model = sample_model(ScalarMode::None);
        let mut bytes = to_bytes(&model).unwrap();
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        bytes[8 + header_len] = 0xFF;
        assert!(matches!(
            from_bytes(&bytes).unwrap_err(),
            PipelineError::InvalidCode { bits: 0b11, .. }
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tnt");
        let model = sample_model(ScalarMode::Dual);
        write_quantized(&path, &model).unwrap();
        assert_eq!(read_quantized(&path).unwrap(), model);
    }
}
