//! End-to-end model conversion: load tensor containers, quantize layer by
//! layer, bit-pack, serialize, and report similarity and compression
//! statistics.
//!
//! Per-vector quantization is independent and runs on a worker pool of
//! configurable size; results are assembled in vector order, so output bytes
//! are a pure function of (input bytes, config) regardless of the
//! parallelism degree.

mod container;
mod format;
mod pack;
mod report;

pub use container::{hex_digest, load_container, role_for_rank, save_container, Container};
pub use format::{
    from_bytes, read_quantized, to_bytes, write_quantized, LayerPayload, LayerStats,
    QuantizedBlock, QuantizedLayer, QuantizedModel, FORMAT_VERSION, TNT_MAGIC,
};
pub use pack::{pack_codes, packed_len, unpack_codes};
pub use report::{ConversionReport, FractionSummary, LayerReport, Totals};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, ScalarError, ScalarSet};
use crate::tensor::{
    decompose, recompose, DecomposeStrategy, Dtype, TensorError, TensorShape, WeightTensor,
};
use crate::ternary::{binarize, ternarize, Mode, TernaryError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },
    #[error("unsupported dtype {descr:?} in layer {layer:?} (only little-endian f4/f8)")]
    UnsupportedDtype { layer: String, descr: String },
    #[error("unsupported format version: {found}")]
    VersionMismatch { found: String },
    #[error("invalid 2-bit code {bits:#04b} at code index {index}")]
    InvalidCode { bits: u8, index: usize },
    #[error("requested {requested} codes but packed stream holds at most {available}")]
    CodeCountMismatch { requested: usize, available: usize },
    #[error("non-finite value in layer {layer:?} at element {index}")]
    NonFinite { layer: String, index: usize },
    #[error("no layer named {name:?} in the container")]
    UnknownLayer { name: String },
    #[error("skip layer {name:?} not in manifest; valid layers: {}", valid.join(", "))]
    UnknownSkipLayer { name: String, valid: Vec<String> },
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },
    #[error("layer {layer:?}: {source}")]
    Tensor {
        layer: String,
        #[source]
        source: TensorError,
    },
    #[error("layer {layer:?}, vector {vector}: {source}")]
    Quantize {
        layer: String,
        vector: usize,
        #[source]
        source: TernaryError,
    },
    #[error("layer {layer:?}, vector {vector}: {source}")]
    Scalar {
        layer: String,
        vector: usize,
        #[source]
        source: ScalarError,
    },
    #[error("zip archive error: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Structural role of a layer, classified by tensor rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerRole {
    Conv,
    Dense,
    Bias,
    Other,
}

impl std::fmt::Display for LayerRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LayerRole::Conv => "conv",
            LayerRole::Dense => "dense",
            LayerRole::Bias => "bias",
            LayerRole::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub index: usize,
    pub shape: TensorShape,
    pub dtype: Dtype,
    pub role: LayerRole,
}

/// Ordered layer listing plus the SHA-256 of the source container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelManifest {
    pub layers: Vec<LayerInfo>,
    pub source_digest: String,
}

impl ModelManifest {
    pub fn layer_names(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.name.clone()).collect()
    }
}

/// Which scalars to store per vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarMode {
    None,
    Single,
    Dual,
}

impl std::fmt::Display for ScalarMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalarMode::None => "none",
            ScalarMode::Single => "single",
            ScalarMode::Dual => "dual",
        })
    }
}

/// Conversion settings. `parallelism` only controls the worker pool; it never
/// influences output bytes and is not echoed into the output file.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeConfig {
    pub mode: Mode,
    pub scalars: ScalarMode,
    pub strategy: DecomposeStrategy,
    pub skip_layers: Vec<String>,
    pub include_biases: bool,
    pub parallelism: usize,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ternary,
            scalars: ScalarMode::Single,
            strategy: DecomposeStrategy::ChannelWise,
            skip_layers: Vec::new(),
            include_biases: false,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl QuantizeConfig {
    pub fn validate(&self, manifest: &ModelManifest) -> Result<(), PipelineError> {
        if self.parallelism == 0 {
            return Err(PipelineError::InvalidConfig {
                reason: "parallelism must be a positive integer".to_string(),
            });
        }
        for name in &self.skip_layers {
            if !manifest.layers.iter().any(|l| &l.name == name) {
                return Err(PipelineError::UnknownSkipLayer {
                    name: name.clone(),
                    valid: manifest.layer_names(),
                });
            }
        }
        Ok(())
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            mode: self.mode,
            scalars: self.scalars,
            strategy: self.strategy,
            skip_layers: self.skip_layers.clone(),
            include_biases: self.include_biases,
        }
    }
}

/// The config fields that determine output bytes, echoed into the file
/// header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mode: Mode,
    pub scalars: ScalarMode,
    pub strategy: DecomposeStrategy,
    pub skip_layers: Vec<String>,
    pub include_biases: bool,
}

/// Strategy actually applied to a tensor: the requested one when its rank
/// supports it, otherwise the rank's structural default.
pub fn effective_strategy(requested: DecomposeStrategy, rank: usize) -> DecomposeStrategy {
    match (requested, rank) {
        (DecomposeStrategy::Flat, _) => DecomposeStrategy::Flat,
        (DecomposeStrategy::ChannelWise, 4) | (DecomposeStrategy::RowWise, 4) => {
            DecomposeStrategy::ChannelWise
        }
        (DecomposeStrategy::ChannelWise, 2) | (DecomposeStrategy::RowWise, 2) => {
            DecomposeStrategy::RowWise
        }
        _ => DecomposeStrategy::Flat,
    }
}

struct VectorOutcome {
    codes: Vec<i8>,
    scalars: ScalarSet,
    cosine: Option<f64>,
    nonzero: usize,
}

fn quantize_vector(
    values: &[f64],
    mode: Mode,
    scalar_mode: ScalarMode,
) -> Result<VectorOutcome, TernaryQuantizeError> {
    let len = values.len();
    if values.iter().all(|&v| v == 0.0) {
        // Degenerate slice: all-zero code block with lambda 0, counted as a
        // warning by the caller.
        let scalars = match scalar_mode {
            ScalarMode::None => ScalarSet::None,
            ScalarMode::Single | ScalarMode::Dual => ScalarSet::Single { lambda: 0.0 },
        };
        return Ok(VectorOutcome {
            codes: vec![0i8; len],
            scalars,
            cosine: None,
            nonzero: 0,
        });
    }
    let result = match mode {
        Mode::Ternary => ternarize(values),
        Mode::Binary => binarize(values),
    }
    .map_err(TernaryQuantizeError::Ternary)?;
    let codes = result.vector.into_codes();
    let scalars = match scalar_mode {
        ScalarMode::None => Ok(ScalarSet::None),
        ScalarMode::Single => scalar::single_scalar(values, &codes),
        ScalarMode::Dual => scalar::dual_scalar(values, &codes),
    }
    .map_err(TernaryQuantizeError::Scalar)?
    .to_f32_precision();
    Ok(VectorOutcome {
        codes,
        scalars,
        cosine: Some(result.cosine),
        nonzero: result.nonzero_count,
    })
}

enum TernaryQuantizeError {
    Ternary(TernaryError),
    Scalar(ScalarError),
}

/// Quantize in-memory tensors. `source_digest` identifies the input for the
/// output header; [`quantize_model`] fills it from the container file.
pub fn quantize_tensors(
    tensors: &[WeightTensor],
    source_digest: &str,
    config: &QuantizeConfig,
) -> Result<(QuantizedModel, ConversionReport), PipelineError> {
    let started = std::time::Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::InvalidConfig {
            reason: format!("cannot build worker pool: {e}"),
        })?;

    let mut layers = Vec::with_capacity(tensors.len());
    let mut layer_reports = Vec::with_capacity(tensors.len());
    for tensor in tensors {
        let role = role_for_rank(tensor.shape.rank());
        let skip = config.skip_layers.contains(&tensor.layer_name)
            || (role == LayerRole::Bias && !config.include_biases);
        if skip {
            layers.push(QuantizedLayer {
                name: tensor.layer_name.clone(),
                index: tensor.layer_index,
                shape: tensor.shape.clone(),
                dtype: tensor.dtype,
                role,
                payload: LayerPayload::Verbatim(verbatim_bytes(tensor)),
            });
            layer_reports.push(LayerReport {
                name: tensor.layer_name.clone(),
                index: tensor.layer_index,
                role,
                dtype: tensor.dtype,
                quantized: false,
                parameter_count: tensor.element_count(),
                vector_count: 0,
                vector_len: 0,
                mean_cosine: None,
                min_cosine: None,
                nonzero_fraction: None,
                degenerate_count: 0,
                original_bytes: tensor.byte_size(),
                code_bytes: 0,
                scalar_bytes: 0,
            });
            continue;
        }

        let strategy = effective_strategy(config.strategy, tensor.shape.rank());
        let vectors = decompose(tensor, strategy).map_err(|source| PipelineError::Tensor {
            layer: tensor.layer_name.clone(),
            source,
        })?;
        let vector_count = vectors.len();
        let vector_len = vectors.first().map_or(0, |v| v.values.len());

        let outcomes: Result<Vec<VectorOutcome>, (usize, TernaryQuantizeError)> = pool.install(|| {
            use rayon::prelude::*;
            vectors
                .par_iter()
                .enumerate()
                .map(|(i, v)| {
                    quantize_vector(&v.values, config.mode, config.scalars).map_err(|e| (i, e))
                })
                .collect()
        });
        let outcomes = outcomes.map_err(|(vector, e)| match e {
            TernaryQuantizeError::Ternary(source) => PipelineError::Quantize {
                layer: tensor.layer_name.clone(),
                vector,
                source,
            },
            TernaryQuantizeError::Scalar(source) => PipelineError::Scalar {
                layer: tensor.layer_name.clone(),
                vector,
                source,
            },
        })?;

        let mut all_codes = Vec::with_capacity(vector_count * vector_len);
        let mut scalars = Vec::with_capacity(vector_count);
        let mut degenerate = Vec::new();
        let mut cos_sum = 0.0;
        let mut cos_min = f64::INFINITY;
        let mut frac_sum = 0.0;
        let mut frac_min = f64::INFINITY;
        let mut frac_max = f64::NEG_INFINITY;
        let mut live = 0usize;
        for (i, o) in outcomes.iter().enumerate() {
            all_codes.extend_from_slice(&o.codes);
            scalars.push(o.scalars);
            match o.cosine {
                Some(c) => {
                    live += 1;
                    cos_sum += c;
                    cos_min = cos_min.min(c);
                    let frac = o.nonzero as f64 / vector_len as f64;
                    frac_sum += frac;
                    frac_min = frac_min.min(frac);
                    frac_max = frac_max.max(frac);
                }
                None => degenerate.push(i as u32),
            }
        }
        let stats = LayerStats {
            mean_cosine: (live > 0).then(|| cos_sum / live as f64),
            min_cosine: (live > 0).then_some(cos_min),
            mean_nonzero_fraction: (live > 0).then(|| frac_sum / live as f64),
        };
        let codes = pack_codes(&all_codes)?;
        let block = QuantizedBlock {
            strategy,
            vector_count,
            vector_len,
            codes,
            scalars,
            degenerate,
            stats,
        };

        layer_reports.push(LayerReport {
            name: tensor.layer_name.clone(),
            index: tensor.layer_index,
            role,
            dtype: tensor.dtype,
            quantized: true,
            parameter_count: tensor.element_count(),
            vector_count,
            vector_len,
            mean_cosine: stats.mean_cosine,
            min_cosine: stats.min_cosine,
            nonzero_fraction: (live > 0).then_some(FractionSummary {
                mean: frac_sum / live as f64,
                min: frac_min,
                max: frac_max,
            }),
            degenerate_count: block.degenerate.len(),
            original_bytes: tensor.byte_size(),
            code_bytes: block.codes.len(),
            scalar_bytes: 4 * block.scalar_value_count(),
        });
        layers.push(QuantizedLayer {
            name: tensor.layer_name.clone(),
            index: tensor.layer_index,
            shape: tensor.shape.clone(),
            dtype: tensor.dtype,
            role,
            payload: LayerPayload::Quantized(block),
        });
    }

    let model = QuantizedModel {
        config: config.echo(),
        source_digest: source_digest.to_string(),
        layers,
    };

    let original_bytes: usize = layer_reports.iter().map(|l| l.original_bytes).sum();
    let packed_bytes: usize = layer_reports.iter().map(LayerReport::packed_bytes).sum();
    let live_vectors: usize = layer_reports
        .iter()
        .filter(|l| l.quantized)
        .map(|l| l.vector_count - l.degenerate_count)
        .sum();
    let mean_cosine = (live_vectors > 0).then(|| {
        layer_reports
            .iter()
            .filter_map(|l| {
                l.mean_cosine
                    .map(|m| m * (l.vector_count - l.degenerate_count) as f64)
            })
            .sum::<f64>()
            / live_vectors as f64
    });
    let totals = Totals {
        parameter_count: layer_reports.iter().map(|l| l.parameter_count).sum(),
        original_bytes,
        packed_bytes,
        compression_ratio: original_bytes as f64 / packed_bytes as f64,
        quantized_layers: layer_reports.iter().filter(|l| l.quantized).count(),
        skipped_layers: layer_reports.iter().filter(|l| !l.quantized).count(),
        degenerate_vectors: layer_reports.iter().map(|l| l.degenerate_count).sum(),
        mean_cosine,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, ConversionReport { layers: layer_reports, totals }))
}

/// Quantize every tensor of an opened container.
pub fn quantize_model(
    container: &Container,
    config: &QuantizeConfig,
) -> Result<(QuantizedModel, ConversionReport), PipelineError> {
    config.validate(container.manifest())?;
    let tensors = container.read_all()?;
    quantize_tensors(&tensors, &container.manifest().source_digest, config)
}

fn verbatim_bytes(tensor: &WeightTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(tensor.byte_size());
    match tensor.dtype {
        Dtype::F32 => {
            for &v in tensor.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in tensor.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Rebuild real-valued tensors from a quantized model: skipped layers decode
/// their verbatim payload, quantized layers reconstruct each vector from its
/// codes and scalars (degenerate vectors become zeros).
pub fn dequantize_model(model: &QuantizedModel) -> Result<Vec<WeightTensor>, PipelineError> {
    let mut out = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let values = match &layer.payload {
            LayerPayload::Verbatim(raw) => match layer.dtype {
                Dtype::F32 => raw
                    .chunks_exact(4)
                    .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                    .collect(),
                Dtype::F64 => raw
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            },
            LayerPayload::Quantized(block) => {
                let codes = unpack_codes(&block.codes, block.code_count())?;
                let mut vectors = Vec::with_capacity(block.vector_count);
                for (i, chunk) in codes.chunks_exact(block.vector_len.max(1)).enumerate() {
                    if chunk.iter().all(|&c| c == 0) {
                        vectors.push(vec![0.0; block.vector_len]);
                    } else {
                        let rec = scalar::reconstruct(chunk, &block.scalars[i]).map_err(
                            |source| PipelineError::Scalar {
                                layer: layer.name.clone(),
                                vector: i,
                                source,
                            },
                        )?;
                        vectors.push(rec);
                    }
                }
                recompose(&layer.shape, &vectors, block.strategy).map_err(|source| {
                    PipelineError::Tensor {
                        layer: layer.name.clone(),
                        source,
                    }
                })?
            }
        };
        out.push(
            WeightTensor::new(
                layer.name.clone(),
                layer.index,
                layer.shape.clone(),
                values,
                layer.dtype,
            )
            .map_err(|source| PipelineError::Tensor {
                layer: layer.name.clone(),
                source,
            })?,
        );
    }
    Ok(out)
}

/// Outcome of the 16x code-stream check for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCompression {
    pub name: String,
    pub code_ratio: Option<f64>,
    /// Whether this layer participates in the assertion (quantized f32 layer
    /// with at least [`COMPRESSION_ASSERT_MIN_ELEMENTS`] weights; smaller
    /// layers lose too much to final-byte padding).
    pub asserted: bool,
    pub within_bounds: Option<bool>,
}

pub const COMPRESSION_ASSERT_MIN_ELEMENTS: usize = 1000;
pub const CODE_RATIO_BOUNDS: (f64, f64) = (15.9, 16.0);

/// Check that every large quantized f32 layer compresses its code stream by
/// 15.9x-16.0x (scalars and headers excluded). Returns the measured ratios;
/// never fails, the caller inspects `passed`.
pub fn verify_compression(report: &ConversionReport) -> CompressionCheck {
    let layers: Vec<LayerCompression> = report
        .layers
        .iter()
        .map(|l| {
            let code_ratio = l.code_ratio();
            let asserted = l.quantized
                && l.dtype == Dtype::F32
                && l.parameter_count >= COMPRESSION_ASSERT_MIN_ELEMENTS;
            let within_bounds = asserted.then(|| {
                let r = code_ratio.unwrap_or(0.0);
                r >= CODE_RATIO_BOUNDS.0 && r <= CODE_RATIO_BOUNDS.1
            });
            LayerCompression {
                name: l.name.clone(),
                code_ratio,
                asserted,
                within_bounds,
            }
        })
        .collect();
    CompressionCheck {
        passed: layers
            .iter()
            .all(|l| l.within_bounds.unwrap_or(true)),
        overall_ratio: report.totals.compression_ratio,
        layers,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionCheck {
    pub passed: bool,
    /// Whole-file ratio including scalars and verbatim sections, reported but
    /// not asserted.
    pub overall_ratio: f64,
    pub layers: Vec<LayerCompression>,
}
