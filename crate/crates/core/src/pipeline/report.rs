//! Conversion reporting: per-layer similarity and size accounting, exportable
//! as CSV (one row per layer plus a TOTAL row) or JSON.

use std::path::Path;

use serde::Serialize;

use super::{LayerRole, PipelineError};
use crate::tensor::Dtype;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub index: usize,
    pub role: LayerRole,
    pub dtype: Dtype,
    pub quantized: bool,
    pub parameter_count: usize,
    pub vector_count: usize,
    pub vector_len: usize,
    /// Mean/min cosine over non-degenerate vectors; `None` for skipped layers
    /// or layers whose vectors were all degenerate.
    pub mean_cosine: Option<f64>,
    pub min_cosine: Option<f64>,
    /// Distribution of the nonzero fraction m/N across vectors.
    pub nonzero_fraction: Option<FractionSummary>,
    pub degenerate_count: usize,
    pub original_bytes: usize,
    pub code_bytes: usize,
    pub scalar_bytes: usize,
}

impl LayerReport {
    /// Bytes this layer occupies after conversion (skipped layers stay at
    /// their original size).
    pub fn packed_bytes(&self) -> usize {
        if self.quantized {
            self.code_bytes + self.scalar_bytes
        } else {
            self.original_bytes
        }
    }

    /// Original bytes over code-stream bytes, excluding scalars and headers.
    pub fn code_ratio(&self) -> Option<f64> {
        (self.quantized && self.code_bytes > 0)
            .then(|| self.original_bytes as f64 / self.code_bytes as f64)
    }

    /// Original bytes over code + scalar bytes.
    pub fn total_ratio(&self) -> f64 {
        self.original_bytes as f64 / self.packed_bytes() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Totals {
    pub parameter_count: usize,
    pub original_bytes: usize,
    pub packed_bytes: usize,
    pub compression_ratio: f64,
    pub quantized_layers: usize,
    pub skipped_layers: usize,
    /// Degenerate (all-zero) vectors across the model; each one raised a
    /// warning during conversion.
    pub degenerate_vectors: usize,
    /// Vector-weighted mean cosine over all quantized, non-degenerate vectors.
    pub mean_cosine: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversionReport {
    pub layers: Vec<LayerReport>,
    pub totals: Totals,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ConversionReport {
    /// CSV rendering: header, one row per layer, and a final TOTAL row.
    /// Deterministic for a given report.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "layer,index,role,dtype,quantized,parameters,vectors,vector_len,\
             mean_cosine,min_cosine,nonzero_mean,nonzero_min,nonzero_max,degenerate,\
             original_bytes,code_bytes,scalar_bytes,code_ratio,total_ratio\n",
        );
        for l in &self.layers {
            let frac = l.nonzero_fraction;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                l.name,
                l.index,
                l.role,
                l.dtype,
                l.quantized,
                l.parameter_count,
                l.vector_count,
                l.vector_len,
                fmt_opt(l.mean_cosine),
                fmt_opt(l.min_cosine),
                fmt_opt(frac.map(|f| f.mean)),
                fmt_opt(frac.map(|f| f.min)),
                fmt_opt(frac.map(|f| f.max)),
                l.degenerate_count,
                l.original_bytes,
                l.code_bytes,
                l.scalar_bytes,
                fmt_opt(l.code_ratio()),
                l.total_ratio(),
            ));
        }
        let t = &self.totals;
        out.push_str(&format!(
            "TOTAL,,,,,{},,,{},,,,,{},{},,,,{}\n",
            t.parameter_count,
            fmt_opt(t.mean_cosine),
            t.degenerate_vectors,
            t.original_bytes,
            t.compression_ratio,
        ));
        out
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(name: &str, quantized: bool) -> LayerReport {
        LayerReport {
            name: name.to_string(),
            index: 0,
            role: LayerRole::Dense,
            dtype: Dtype::F32,
            quantized,
            parameter_count: 1000,
            vector_count: 10,
            vector_len: 100,
            mean_cosine: quantized.then_some(0.9),
            min_cosine: quantized.then_some(0.85),
            nonzero_fraction: quantized.then_some(FractionSummary {
                mean: 0.6,
                min: 0.5,
                max: 0.7,
            }),
            degenerate_count: 0,
            original_bytes: 4000,
            code_bytes: if quantized { 250 } else { 0 },
            scalar_bytes: if quantized { 40 } else { 0 },
        }
    }

    #[test]
    fn ratios() {
        let q = layer("q", true);
        assert_eq!(q.code_ratio(), Some(16.0));
        assert_eq!(q.packed_bytes(), 290);
        assert!(q.total_ratio() > 13.0);
        let skipped = layer("s", false);
        assert_eq!(skipped.code_ratio(), None);
        assert_eq!(skipped.total_ratio(), 1.0);
    }

    #[test]
    fn csv_shape_and_determinism() {
        let report = ConversionReport {
            layers: vec![layer("a", true), layer("b", false)],
            totals: Totals {
                parameter_count: 2000,
                original_bytes: 8000,
                packed_bytes: 4290,
                compression_ratio: 8000.0 / 4290.0,
                quantized_layers: 1,
                skipped_layers: 1,
                degenerate_vectors: 0,
                mean_cosine: Some(0.9),
                wall_seconds: 0.5,
            },
        };
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4); // header + 2 layers + TOTAL
        assert!(csv.starts_with("layer,index,role,"));
        assert!(csv.lines().last().unwrap().starts_with("TOTAL,"));
        assert_eq!(csv, report.to_csv());
        assert!(report.to_json().unwrap().contains("\"wall_seconds\""));
    }
}
