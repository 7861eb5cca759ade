//! Reading and writing tensor containers: single-array `.npy` files (magic
//! 0x93 "NUMPY", version 1.0 header) and the zip-of-arrays `.npz` aggregate
//! with one member per named tensor.
//!
//! Only little-endian f4/f8 payloads in C order are accepted. Payload bytes
//! are held in memory and decoded to f64 on demand.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use zip::write::FileOptions;

use super::{LayerInfo, LayerRole, ModelManifest, PipelineError};
use crate::tensor::{Dtype, TensorShape, WeightTensor};

const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug)]
struct RawEntry {
    name: String,
    shape: TensorShape,
    dtype: Dtype,
    payload: Vec<u8>,
}

/// An opened tensor container: manifest plus lazily decodable payloads.
#[derive(Debug)]
pub struct Container {
    manifest: ModelManifest,
    entries: Vec<RawEntry>,
}

impl Container {
    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    /// Decode one tensor by name, validating finiteness.
    pub fn read_tensor(&self, name: &str) -> Result<WeightTensor, PipelineError> {
        let index = self
            .entries
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| PipelineError::UnknownLayer {
                name: name.to_string(),
            })?;
        self.decode(index)
    }

    /// Decode every tensor in manifest order.
    pub fn read_all(&self) -> Result<Vec<WeightTensor>, PipelineError> {
        (0..self.entries.len()).map(|i| self.decode(i)).collect()
    }

    fn decode(&self, index: usize) -> Result<WeightTensor, PipelineError> {
        let e = &self.entries[index];
        let values = decode_payload(&e.payload, e.dtype);
        WeightTensor::new(e.name.clone(), index, e.shape.clone(), values, e.dtype).map_err(
            |source| match source {
                crate::tensor::TensorError::NonFinite { index } => PipelineError::NonFinite {
                    layer: e.name.clone(),
                    index,
                },
                other => PipelineError::Tensor {
                    layer: e.name.clone(),
                    source: other,
                },
            },
        )
    }
}

fn decode_payload(payload: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    }
}

fn encode_payload(values: &[f64], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.byte_size());
    match dtype {
        Dtype::F32 => {
            for &v in values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Role classification by rank: 4-dim convolution, 2-dim dense, 1-dim bias.
pub fn role_for_rank(rank: usize) -> LayerRole {
    match rank {
        4 => LayerRole::Conv,
        2 => LayerRole::Dense,
        1 => LayerRole::Bias,
        _ => LayerRole::Other,
    }
}

/// Open a `.npy` or `.npz` container. The format is sniffed from the file
/// magic, not the extension.
pub fn load_container(path: impl AsRef<Path>) -> Result<Container, PipelineError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let digest = hex_digest(&bytes);
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tensor".to_string());

    let entries = if bytes.starts_with(b"PK") {
        load_npz(&bytes)?
    } else {
        vec![parse_npy(&bytes, 0, stem)?]
    };

    let layers = entries
        .iter()
        .enumerate()
        .map(|(index, e)| LayerInfo {
            name: e.name.clone(),
            index,
            shape: e.shape.clone(),
            dtype: e.dtype,
            role: role_for_rank(e.shape.rank()),
        })
        .collect();
    Ok(Container {
        manifest: ModelManifest {
            layers,
            source_digest: digest,
        },
        entries,
    })
}

fn load_npz(bytes: &[u8]) -> Result<Vec<RawEntry>, PipelineError> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes))?;
    let mut entries = Vec::with_capacity(archive.len());
    for i in 0..archive.len() {
        let mut member = archive.by_index(i)?;
        let member_name = member.name().to_string();
        let name = member_name
            .strip_suffix(".npy")
            .ok_or_else(|| PipelineError::Parse {
                offset: 0,
                reason: format!("archive member {member_name:?} is not a .npy array"),
            })?
            .to_string();
        let mut payload = Vec::with_capacity(member.size() as usize);
        member.read_to_end(&mut payload)?;
        entries.push(parse_npy(&payload, 0, name)?);
    }
    Ok(entries)
}

/// Parse one npy image. `base` offsets error positions when the image is
/// embedded in a larger file.
fn parse_npy(bytes: &[u8], base: u64, name: String) -> Result<RawEntry, PipelineError> {
    let parse_err = |offset: u64, reason: String| PipelineError::Parse {
        offset: base + offset,
        reason,
    };
    if bytes.len() < 10 {
        return Err(parse_err(
            bytes.len() as u64,
            "file truncated before npy header".to_string(),
        ));
    }
    if &bytes[..6] != NPY_MAGIC {
        return Err(parse_err(0, "bad magic, expected \\x93NUMPY".to_string()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(parse_err(8, "file truncated in header length".to_string()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        _ => {
            return Err(parse_err(
                6,
                format!("unsupported npy version {major}.{minor}"),
            ))
        }
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err(parse_err(
            bytes.len() as u64,
            format!("file truncated inside header (need {data_start} bytes)"),
        ));
    }
    let header = std::str::from_utf8(&bytes[header_start..data_start])
        .map_err(|_| parse_err(header_start as u64, "header is not UTF-8".to_string()))?;
    let dict = HeaderDict::parse(header)
        .map_err(|reason| parse_err(header_start as u64, reason))?;

    let dtype = match dict.descr.as_str() {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => {
            return Err(PipelineError::UnsupportedDtype {
                layer: name,
                descr: other.to_string(),
            })
        }
    };
    if dict.fortran_order {
        return Err(parse_err(
            header_start as u64,
            "Fortran-order payloads are not supported".to_string(),
        ));
    }
    let shape = TensorShape::new(dict.shape).map_err(|e| {
        parse_err(header_start as u64, format!("bad shape in header: {e}"))
    })?;

    let expected = shape.element_count() * dtype.byte_size();
    let payload = &bytes[data_start..];
    if payload.len() != expected {
        return Err(parse_err(
            (data_start + payload.len().min(expected)) as u64,
            format!(
                "payload holds {} bytes, shape {shape} at {dtype:?} needs {expected}",
                payload.len()
            ),
        ));
    }
    Ok(RawEntry {
        name,
        shape,
        dtype,
        payload: payload.to_vec(),
    })
}

struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    /// Parse the Python dict literal numpy writes, e.g.
    /// `{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }`.
    fn parse(header: &str) -> Result<Self, String> {
        let descr = quoted_value(header, "descr").ok_or("missing 'descr' key")?;
        let fortran = keyed_value(header, "fortran_order").ok_or("missing 'fortran_order' key")?;
        let fortran_order = match fortran.trim() {
            "True" => true,
            "False" => false,
            other => return Err(format!("bad fortran_order value {other:?}")),
        };
        let shape_src = keyed_value(header, "shape").ok_or("missing 'shape' key")?;
        let inner = shape_src
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| format!("bad shape tuple {shape_src:?}"))?;
        let mut shape = Vec::new();
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            shape.push(
                part.parse::<usize>()
                    .map_err(|_| format!("bad shape entry {part:?}"))?,
            );
        }
        if shape.is_empty() {
            return Err("zero-dimensional arrays are not weight tensors".to_string());
        }
        Ok(Self {
            descr,
            fortran_order,
            shape,
        })
    }
}

/// Value of `'key': '...'` in the header dict.
fn quoted_value(header: &str, key: &str) -> Option<String> {
    let rest = keyed_value(header, key)?;
    let rest = rest.trim();
    let quote = rest.chars().next()?;
    if quote != '\'' && quote != '"' {
        return None;
    }
    rest[1..].split(quote).next().map(str::to_string)
}

/// Raw text after `'key':` up to the matching top-level comma.
fn keyed_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}':");
    let start = header.find(&pat)? + pat.len();
    let rest = &header[start..];
    let mut depth = 0usize;
    for (i, ch) in rest.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            ',' | '}' if depth == 0 => return Some(&rest[..i]),
            _ => {}
        }
    }
    Some(rest)
}

fn npy_bytes(tensor: &WeightTensor) -> Vec<u8> {
    let descr = match tensor.dtype {
        Dtype::F32 => "<f4",
        Dtype::F64 => "<f8",
    };
    let shape = match tensor.shape.dims() {
        [single] => format!("({single},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}");
    // Pad with spaces so magic + version + length + dict aligns to 64 bytes,
    // terminated by a newline, matching numpy's own writer.
    let unpadded = 10 + dict.len() + 1;
    dict.push_str(&" ".repeat(unpadded.div_ceil(64) * 64 - unpadded));
    dict.push('\n');

    let mut out = Vec::new();
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend_from_slice(&encode_payload(tensor.values(), tensor.dtype));
    out
}

/// Write tensors as a container: a bare array if the path ends in `.npy`
/// (single tensor only), otherwise a zip aggregate with one member per
/// tensor, stored uncompressed with a fixed timestamp so output is
/// deterministic.
pub fn save_container(
    path: impl AsRef<Path>,
    tensors: &[WeightTensor],
) -> Result<(), PipelineError> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "npy") {
        let [tensor] = tensors else {
            return Err(PipelineError::Parse {
                offset: 0,
                reason: format!(
                    ".npy holds exactly one array; got {} tensors (use .npz)",
                    tensors.len()
                ),
            });
        };
        std::fs::write(path, npy_bytes(tensor))?;
        return Ok(());
    }
    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = FileOptions::default()
        .compression_method(zip::CompressionMethod::Stored)
        .last_modified_time(zip::DateTime::default());
    for tensor in tensors {
        writer.start_file(format!("{}.npy", tensor.layer_name), options)?;
        writer.write_all(&npy_bytes(tensor))?;
    }
    let bytes = writer.finish()?.into_inner();
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
