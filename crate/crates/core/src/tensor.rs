//! Decomposition of weight tensors into target vectors and the inverse
//! recomposition, used for quantization, verification, and export.
//!
//! Payloads are flat row-major sequences. Channel-wise slicing of an
//! [N, C, W, H] tensor yields N*C vectors of length W*H ordered by
//! (filter, channel); row-wise slicing of [O, I] yields O rows; flat yields
//! a single vector. All three are contiguous slices of the payload, so
//! recomposition is concatenation plus shape checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("empty tensor: dimension {dim_index} is zero")]
    EmptyTensor { dim_index: usize },
    #[error("tensor shape has no dimensions")]
    EmptyShape,
    #[error("shape mismatch: {reason}")]
    ShapeMismatch { reason: String },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

/// Element type of a serialized payload. Internal arithmetic is always f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn byte_size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        })
    }
}

/// Row-major tensor shape; every dimension is at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TensorShape {
    dims: Vec<usize>,
}

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self, TensorError> {
        if dims.is_empty() {
            return Err(TensorError::EmptyShape);
        }
        for (dim_index, &d) in dims.iter().enumerate() {
            if d == 0 {
                return Err(TensorError::EmptyTensor { dim_index });
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// A named, shaped block of finite floating-point weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub layer_name: String,
    pub layer_index: usize,
    pub shape: TensorShape,
    pub dtype: Dtype,
    values: Vec<f64>,
}

impl WeightTensor {
    pub fn new(
        layer_name: impl Into<String>,
        layer_index: usize,
        shape: TensorShape,
        values: Vec<f64>,
        dtype: Dtype,
    ) -> Result<Self, TensorError> {
        if shape.element_count() != values.len() {
            return Err(TensorError::ShapeMismatch {
                reason: format!(
                    "shape {shape} holds {} elements but payload has {}",
                    shape.element_count(),
                    values.len()
                ),
            });
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(TensorError::NonFinite { index });
            }
        }
        Ok(Self {
            layer_name: layer_name.into(),
            layer_index,
            shape,
            dtype,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn element_count(&self) -> usize {
        self.values.len()
    }

    /// Payload size in bytes at the tensor's serialized precision.
    pub fn byte_size(&self) -> usize {
        self.values.len() * self.dtype.byte_size()
    }
}

/// How a tensor is sliced into target vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecomposeStrategy {
    /// [N, C, W, H] -> N*C vectors of length W*H, ordered by (filter, channel).
    ChannelWise,
    /// [O, I] -> O vectors of length I.
    RowWise,
    /// Any shape -> one vector holding the whole payload.
    Flat,
}

impl std::fmt::Display for DecomposeStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecomposeStrategy::ChannelWise => "channel",
            DecomposeStrategy::RowWise => "row",
            DecomposeStrategy::Flat => "flat",
        })
    }
}

/// Where a target vector came from within its tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceOrigin {
    Channel { filter: usize, channel: usize },
    Row { index: usize },
    Flat,
}

/// One real-valued vector extracted from a layer tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub layer_name: String,
    pub origin: SliceOrigin,
    pub values: Vec<f64>,
}

/// Vector count and length produced by a strategy on a shape.
pub fn vector_geometry(
    shape: &TensorShape,
    strategy: DecomposeStrategy,
) -> Result<(usize, usize), TensorError> {
    match strategy {
        DecomposeStrategy::ChannelWise => {
            let [n, c, w, h] = *shape.dims() else {
                return Err(TensorError::ShapeMismatch {
                    reason: format!("channel-wise requires a 4-dim shape, got {shape}"),
                });
            };
            Ok((n * c, w * h))
        }
        DecomposeStrategy::RowWise => {
            let [o, i] = *shape.dims() else {
                return Err(TensorError::ShapeMismatch {
                    reason: format!("row-wise requires a 2-dim shape, got {shape}"),
                });
            };
            Ok((o, i))
        }
        DecomposeStrategy::Flat => Ok((1, shape.element_count())),
    }
}

/// Slice a tensor into target vectors. Deterministic: equal tensors yield
/// identical orderings.
pub fn decompose(
    tensor: &WeightTensor,
    strategy: DecomposeStrategy,
) -> Result<Vec<TargetVector>, TensorError> {
    let (count, len) = vector_geometry(&tensor.shape, strategy)?;
    let values = tensor.values();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let origin = match strategy {
            DecomposeStrategy::ChannelWise => {
                let channels = tensor.shape.dims()[1];
                SliceOrigin::Channel {
                    filter: k / channels,
                    channel: k % channels,
                }
            }
            DecomposeStrategy::RowWise => SliceOrigin::Row { index: k },
            DecomposeStrategy::Flat => SliceOrigin::Flat,
        };
        out.push(TargetVector {
            layer_name: tensor.layer_name.clone(),
            origin,
            values: values[k * len..(k + 1) * len].to_vec(),
        });
    }
    Ok(out)
}

/// Inverse of [`decompose`]: reassemble the flat payload from ordered vector
/// values. `recompose(shape, decompose(t, s), s)` reproduces `t.values()`
/// element-exactly.
pub fn recompose(
    shape: &TensorShape,
    vectors: &[Vec<f64>],
    strategy: DecomposeStrategy,
) -> Result<Vec<f64>, TensorError> {
    let (count, len) = vector_geometry(shape, strategy)?;
    if vectors.len() != count {
        return Err(TensorError::ShapeMismatch {
            reason: format!(
                "expected {count} vectors for {shape} ({strategy}), got {}",
                vectors.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(count * len);
    for (k, v) in vectors.iter().enumerate() {
        if v.len() != len {
            return Err(TensorError::ShapeMismatch {
                reason: format!("vector {k} has length {}, expected {len}", v.len()),
            });
        }
        out.extend_from_slice(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(dims: &[usize]) -> WeightTensor {
        let shape = TensorShape::new(dims.to_vec()).unwrap();
        let n = shape.element_count();
        let values: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 3.0).collect();
        WeightTensor::new("t", 0, shape, values, Dtype::F32).unwrap()
    }

    #[test]
    fn shape_rejects_zero_dim_and_empty() {
        assert_eq!(
            TensorShape::new(vec![2, 0, 3]).unwrap_err(),
            TensorError::EmptyTensor { dim_index: 1 }
        );
        assert_eq!(TensorShape::new(vec![]).unwrap_err(), TensorError::EmptyShape);
    }

    #[test]
    fn weight_tensor_rejects_count_mismatch_and_nan() {
        let shape = TensorShape::new(vec![2, 2]).unwrap();
        assert!(matches!(
            WeightTensor::new("w", 0, shape.clone(), vec![1.0; 3], Dtype::F32).unwrap_err(),
            TensorError::ShapeMismatch { .. }
        ));
        assert_eq!(
            WeightTensor::new("w", 0, shape, vec![1.0, 2.0, f64::INFINITY, 4.0], Dtype::F32)
                .unwrap_err(),
            TensorError::NonFinite { index: 2 }
        );
    }

    #[test]
    fn channel_wise_ordering_and_geometry() {
        let t = tensor(&[2, 3, 5, 5]);
        let vs = decompose(&t, DecomposeStrategy::ChannelWise).unwrap();
        assert_eq!(vs.len(), 6);
        assert!(vs.iter().all(|v| v.values.len() == 25));
        let origins: Vec<SliceOrigin> = vs.iter().map(|v| v.origin).collect();
        assert_eq!(origins[0], SliceOrigin::Channel { filter: 0, channel: 0 });
        assert_eq!(origins[1], SliceOrigin::Channel { filter: 0, channel: 1 });
        assert_eq!(origins[2], SliceOrigin::Channel { filter: 0, channel: 2 });
        assert_eq!(origins[3], SliceOrigin::Channel { filter: 1, channel: 0 });
        // First vector is the first contiguous W*H block.
        assert_eq!(vs[0].values, t.values()[..25]);
    }

    #[test]
    fn channel_wise_singleton() {
        let shape = TensorShape::new(vec![1, 1, 1, 1]).unwrap();
        let t = WeightTensor::new("s", 0, shape, vec![0.5], Dtype::F32).unwrap();
        let vs = decompose(&t, DecomposeStrategy::ChannelWise).unwrap();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].values, vec![0.5]);
    }

    #[test]
    fn row_wise_round_trip() {
        let t = tensor(&[4, 7]);
        let vs = decompose(&t, DecomposeStrategy::RowWise).unwrap();
        assert_eq!(vs.len(), 4);
        assert!(vs.iter().all(|v| v.values.len() == 7));
        let vals: Vec<Vec<f64>> = vs.into_iter().map(|v| v.values).collect();
        let back = recompose(&t.shape, &vals, DecomposeStrategy::RowWise).unwrap();
        assert_eq!(back, t.values());
    }

    #[test]
    fn strategy_shape_mismatches() {
        let t = tensor(&[4, 7]);
        assert!(matches!(
            decompose(&t, DecomposeStrategy::ChannelWise).unwrap_err(),
            TensorError::ShapeMismatch { .. }
        ));
        let t4 = tensor(&[2, 2, 2, 2]);
        assert!(matches!(
            decompose(&t4, DecomposeStrategy::RowWise).unwrap_err(),
            TensorError::ShapeMismatch { .. }
        ));
    }

    #[test]
    fn flat_accepts_any_rank() {
        for dims in [vec![6], vec![2, 3], vec![2, 1, 3], vec![1, 2, 1, 3]] {
            let t = tensor(&dims);
            let vs = decompose(&t, DecomposeStrategy::Flat).unwrap();
            assert_eq!(vs.len(), 1);
            assert_eq!(vs[0].values, t.values());
        }
    }

    #[test]
    fn recompose_rejects_wrong_vector_count() {
        let shape = TensorShape::new(vec![2, 3]).unwrap();
        let err = recompose(&shape, &[vec![0.0; 3]], DecomposeStrategy::RowWise).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }

    #[test]
    fn decompose_is_deterministic() {
        let t = tensor(&[3, 2, 2, 2]);
        let a = decompose(&t, DecomposeStrategy::ChannelWise).unwrap();
        let b = decompose(&t, DecomposeStrategy::ChannelWise).unwrap();
        assert_eq!(a, b);
    }

    fn arb_case() -> impl Strategy<Value = (Vec<usize>, DecomposeStrategy)> {
        prop_oneof![
            proptest::collection::vec(1usize..5, 4).prop_map(|d| (d, DecomposeStrategy::ChannelWise)),
            proptest::collection::vec(1usize..9, 2).prop_map(|d| (d, DecomposeStrategy::RowWise)),
            proptest::collection::vec(1usize..5, 1..4).prop_map(|d| (d, DecomposeStrategy::Flat)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn round_trip_identity((dims, strategy) in arb_case(), seed in any::<u32>()) {
            let shape = TensorShape::new(dims).unwrap();
            let n = shape.element_count();
            let values: Vec<f64> = (0..n)
                .map(|i| ((i as u64 * 2654435761 + u64::from(seed)) % 1000) as f64 / 500.0 - 1.0)
                .collect();
            let t = WeightTensor::new("p", 0, shape.clone(), values, Dtype::F64).unwrap();
            let vecs: Vec<Vec<f64>> = decompose(&t, strategy)
                .unwrap()
                .into_iter()
                .map(|v| v.values)
                .collect();
            let (count, len) = vector_geometry(&shape, strategy).unwrap();
            prop_assert_eq!(vecs.len(), count);
            prop_assert!(vecs.iter().all(|v| v.len() == len));
            let back = recompose(&shape, &vecs, strategy).unwrap();
            prop_assert_eq!(back, t.values());
        }
    }
}
