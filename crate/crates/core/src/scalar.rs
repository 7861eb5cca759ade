//! Scaling factors that minimize the l2 reconstruction error between a
//! target vector and its (scaled) ternary vector.
//!
//! A single scalar stores the length of the orthogonal projection of w onto
//! t. Dual scalars scale the positive-code and negative-code parts of t
//! separately; the split is taken on t's support classes, under which the
//! cross terms vanish exactly and the dual residual is never worse than the
//! single one.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScalarError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("ternary vector has no nonzero code")]
    ZeroTernary,
    #[error("invalid ternary code {value} at index {index}")]
    InvalidCode { value: i8, index: usize },
    #[error("scalar set inconsistent with codes: {reason}")]
    InconsistentScalarSet { reason: &'static str },
}

/// Tuning scalars attached to a ternary vector: none, a single projection
/// length, or one length per sign class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarSet {
    None,
    Single { lambda: f64 },
    Dual { lambda_p: f64, lambda_n: f64 },
}

impl ScalarSet {
    /// Number of stored scalar values (0, 1, or 2).
    pub fn count(&self) -> usize {
        match self {
            ScalarSet::None => 0,
            ScalarSet::Single { .. } => 1,
            ScalarSet::Dual { .. } => 2,
        }
    }

    /// Round the stored values to f32 precision, the serialized form.
    pub fn to_f32_precision(self) -> Self {
        match self {
            ScalarSet::None => ScalarSet::None,
            ScalarSet::Single { lambda } => ScalarSet::Single {
                lambda: f64::from(lambda as f32),
            },
            ScalarSet::Dual { lambda_p, lambda_n } => ScalarSet::Dual {
                lambda_p: f64::from(lambda_p as f32),
                lambda_n: f64::from(lambda_n as f32),
            },
        }
    }
}

struct Split {
    dot_p: f64,
    dot_n: f64,
    m_p: usize,
    m_n: usize,
}

fn split(w: &[f64], codes: &[i8]) -> Result<Split, ScalarError> {
    if w.len() != codes.len() {
        return Err(ScalarError::LengthMismatch {
            left: w.len(),
            right: codes.len(),
        });
    }
    let mut s = Split {
        dot_p: 0.0,
        dot_n: 0.0,
        m_p: 0,
        m_n: 0,
    };
    for (index, (&v, &c)) in w.iter().zip(codes.iter()).enumerate() {
        match c {
            1 => {
                s.dot_p += v;
                s.m_p += 1;
            }
            -1 => {
                s.dot_n -= v;
                s.m_n += 1;
            }
            0 => {}
            _ => return Err(ScalarError::InvalidCode { value: c, index }),
        }
    }
    if s.m_p + s.m_n == 0 {
        return Err(ScalarError::ZeroTernary);
    }
    Ok(s)
}

/// Scalars from a ternarize result are nonnegative by sign agreement; clamp
/// protects against adversarial caller-supplied codes, since the file format
/// stores scalars unsigned.
fn clamp(lambda: f64) -> f64 {
    lambda.max(0.0)
}

/// lambda = (w . t) / |t|, the projection length: `lambda * t / |t|` is the
/// orthogonal projection of w onto t and minimizes |w - mu * t / |t|| over mu.
pub fn single_scalar(w: &[f64], codes: &[i8]) -> Result<ScalarSet, ScalarError> {
    let s = split(w, codes)?;
    let m = (s.m_p + s.m_n) as f64;
    Ok(ScalarSet::Single {
        lambda: clamp((s.dot_p + s.dot_n) / m.sqrt()),
    })
}

/// Separate projection lengths for the positive and negative code classes.
/// Falls back to [`single_scalar`] when t has only one sign class.
pub fn dual_scalar(w: &[f64], codes: &[i8]) -> Result<ScalarSet, ScalarError> {
    let s = split(w, codes)?;
    if s.m_p == 0 || s.m_n == 0 {
        let m = (s.m_p + s.m_n) as f64;
        return Ok(ScalarSet::Single {
            lambda: clamp((s.dot_p + s.dot_n) / m.sqrt()),
        });
    }
    Ok(ScalarSet::Dual {
        lambda_p: clamp(s.dot_p / (s.m_p as f64).sqrt()),
        lambda_n: clamp(s.dot_n / (s.m_n as f64).sqrt()),
    })
}

/// Rebuild the real-valued approximation a code vector plus scalars stand for.
pub fn reconstruct(codes: &[i8], scalars: &ScalarSet) -> Result<Vec<f64>, ScalarError> {
    let mut m_p = 0usize;
    let mut m_n = 0usize;
    for (index, &c) in codes.iter().enumerate() {
        match c {
            1 => m_p += 1,
            -1 => m_n += 1,
            0 => {}
            _ => return Err(ScalarError::InvalidCode { value: c, index }),
        }
    }
    if m_p + m_n == 0 {
        return Err(ScalarError::ZeroTernary);
    }
    match *scalars {
        ScalarSet::None => Ok(codes.iter().map(|&c| f64::from(c)).collect()),
        ScalarSet::Single { lambda } => {
            let scale = lambda / ((m_p + m_n) as f64).sqrt();
            Ok(codes.iter().map(|&c| f64::from(c) * scale).collect())
        }
        ScalarSet::Dual { lambda_p, lambda_n } => {
            if m_p == 0 || m_n == 0 {
                return Err(ScalarError::InconsistentScalarSet {
                    reason: "dual scalars require both sign classes in the codes",
                });
            }
            let scale_p = lambda_p / (m_p as f64).sqrt();
            let scale_n = lambda_n / (m_n as f64).sqrt();
            Ok(codes
                .iter()
                .map(|&c| match c {
                    1 => scale_p,
                    -1 => -scale_n,
                    _ => 0.0,
                })
                .collect())
        }
    }
}

/// l2 distance between w and the reconstruction of (codes, scalars).
pub fn residual_error(w: &[f64], codes: &[i8], scalars: &ScalarSet) -> Result<f64, ScalarError> {
    if w.len() != codes.len() {
        return Err(ScalarError::LengthMismatch {
            left: w.len(),
            right: codes.len(),
        });
    }
    let rec = reconstruct(codes, scalars)?;
    Ok(w.iter()
        .zip(rec.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
