//! Post-training conversion of floating-point weight tensors into optimal
//! ternary (or binary) vectors with tuned scaling factors — no retraining.
//!
//! Each target vector extracted from a layer is replaced by the code vector
//! over {-1, 0, +1} that maximizes cosine similarity. The search needs only
//! N candidates and one sort, O(N log N) per vector. Optional scaling
//! factors (one per vector, or one per sign class) minimize the remaining
//! l2 reconstruction error. Codes pack at 2 bits per weight, a 16x code
//! payload reduction over f32.
//!
//! Modules:
//! - [`tensor`]: slicing weight tensors into target vectors and back
//! - [`ternary`]: the cosine-similarity search, plus a brute-force oracle
//! - [`scalar`]: single and dual scaling factors
//! - [`pipeline`]: container loading, model conversion, `.tnt` serialization
//! - [`experiments`]: reproducible similarity statistics and sweeps
//! - [`verify`]: the self-check harness
//! - [`fixtures`]: synthetic Gaussian models

pub mod experiments;
pub mod fixtures;
pub mod pipeline;
pub mod scalar;
pub mod tensor;
pub mod ternary;
pub mod verify;

pub use pipeline::{
    dequantize_model, load_container, quantize_model, quantize_tensors, read_quantized,
    save_container, verify_compression, write_quantized, Container, ConversionReport,
    LayerInfo, LayerPayload, LayerRole, ModelManifest, PipelineError, QuantizeConfig,
    QuantizedBlock, QuantizedLayer, QuantizedModel, ScalarMode,
};
pub use scalar::{ScalarError, ScalarSet};
pub use tensor::{
    decompose, recompose, DecomposeStrategy, Dtype, TargetVector, TensorError, TensorShape,
    WeightTensor,
};
pub use ternary::{
    binarize, brute_force_ternarize, cosine, similarity_curve, ternarize, Mode, SimilarityCurve,
    TernaryError, TernaryResult, TernaryVector,
};
pub use experiments::{Distribution, ExperimentError, SweepRecord, SweepResult};
