//! Statistical experiments: similarity curves for random target vectors,
//! dimension sweeps for ternary and binary modes, and the analytic large-N
//! reference limits.
//!
//! Reproducibility contract: vectors come from ChaCha8 seeded with
//! `seed_from_u64`. A sweep derives one independent generator per trial by
//! setting the stream id to `(dimension << 32) | trial` on top of the base
//! seed, so parallel and sequential execution produce bit-identical results.
//! Uniform samples use rand's half-open range mapping on [-1, 1); normal
//! samples use rand_distr's ziggurat. The generator, stream derivation, and
//! sample mappings are part of the recorded-output format; changing any of
//! them (including crate major versions) is a format-breaking change.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::ternary::{binarize, similarity_curve, ternarize, Mode, SimilarityCurve, TernaryError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid arguments: {reason}")]
    InvalidArgs { reason: String },
    #[error(transparent)]
    Ternary(#[from] TernaryError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Source law for target-vector components. Both are zero-mean and
/// symmetric; cosine similarity is scale-invariant, so the widths are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Uniform on [-1, 1].
    UniformSymmetric,
    /// Normal with mean 0, variance 1.
    StandardNormal,
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Distribution::UniformSymmetric => "uniform",
            Distribution::StandardNormal => "normal",
        })
    }
}

fn fill(dist: Distribution, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match dist {
        Distribution::UniformSymmetric => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        Distribution::StandardNormal => (0..n)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect(),
    }
}

/// Deterministic random target vector: fixed (dist, n, seed) always yields
/// the same components, on any machine.
pub fn gen_vector(dist: Distribution, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill(dist, n, &mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveOutcome {
    pub curve: SimilarityCurve,
    pub max_cosine: f64,
    pub best_m: usize,
}

/// Full similarity curve of one random target vector.
pub fn curve_experiment(
    dist: Distribution,
    n: usize,
    seed: u64,
) -> Result<CurveOutcome, ExperimentError> {
    let w = gen_vector(dist, n, seed);
    let curve = similarity_curve(&w)?;
    Ok(CurveOutcome {
        max_cosine: curve.max_score(),
        best_m: curve.best_m,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub dimension: usize,
    pub trial: usize,
    pub mode: Mode,
    pub distribution: Distribution,
    pub max_cosine: f64,
    pub argmax_m: usize,
    /// Base seed echoed for the record; the per-trial stream id is derived
    /// from (dimension, trial).
    pub seed: u64,
}

/// Per-dimension mean and population variance of the max cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionSummary {
    pub dimension: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub summaries: Vec<DimensionSummary>,
}

fn trial_rng(base_seed: u64, dimension: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((dimension as u64) << 32) | trial as u64);
    rng
}

/// Max cosine per (dimension, trial) for one mode and distribution. Trials
/// run in parallel but records keep (dimension asc, trial asc) order and are
/// bit-identical to a sequential run.
pub fn dimension_sweep(
    dist: Distribution,
    mode: Mode,
    dims: &[usize],
    trials_per_dim: usize,
    base_seed: u64,
) -> Result<SweepResult, ExperimentError> {
    if dims.is_empty() {
        return Err(ExperimentError::InvalidArgs {
            reason: "dimension list is empty".to_string(),
        });
    }
    if !dims.windows(2).all(|w| w[0] < w[1]) {
        return Err(ExperimentError::InvalidArgs {
            reason: format!("dimensions must be strictly ascending, got {dims:?}"),
        });
    }
    if trials_per_dim == 0 {
        return Err(ExperimentError::InvalidArgs {
            reason: "trials_per_dim must be at least 1".to_string(),
        });
    }

    let cells: Vec<(usize, usize)> = dims
        .iter()
        .flat_map(|&d| (0..trials_per_dim).map(move |t| (d, t)))
        .collect();
    let records: Result<Vec<SweepRecord>, TernaryError> = cells
        .par_iter()
        .map(|&(dimension, trial)| {
            let mut rng = trial_rng(base_seed, dimension, trial);
            let w = fill(dist, dimension, &mut rng);
            let r = match mode {
                Mode::Ternary => ternarize(&w)?,
                Mode::Binary => binarize(&w)?,
            };
            Ok(SweepRecord {
                dimension,
                trial,
                mode,
                distribution: dist,
                max_cosine: r.cosine,
                argmax_m: r.nonzero_count,
                seed: base_seed,
            })
        })
        .collect();
    let records = records?;

    let summaries = dims
        .iter()
        .map(|&dimension| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.dimension == dimension)
                .map(|r| r.max_cosine)
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let variance =
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
            DimensionSummary {
                dimension,
                mean,
                variance,
            }
        })
        .collect();
    Ok(SweepResult { records, summaries })
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Upper tail P(X > x) for the standard normal.
fn normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Analytic large-N limit of the maximum cosine similarity.
///
/// Binary limits are E|x| / sqrt(E x^2): sqrt(3)/2 for uniform, sqrt(2/pi)
/// for normal. The ternary-uniform limit maximizes sqrt(3) sqrt(m) (2-m) / 2
/// at m = 2/3, giving 2 sqrt(2) / 3. The ternary-normal limit maximizes
/// 2 phi(tau) / sqrt(2 (1 - Phi(tau))) over the keep-threshold tau; the
/// objective is unimodal and is resolved here by ternary search (the optimal
/// kept fraction is 2 (1 - Phi(tau*)) ~= 0.5405).
pub fn reference_limit(dist: Distribution, mode: Mode) -> f64 {
    match (dist, mode) {
        (Distribution::UniformSymmetric, Mode::Binary) => 3f64.sqrt() / 2.0,
        (Distribution::StandardNormal, Mode::Binary) => (2.0 / std::f64::consts::PI).sqrt(),
        (Distribution::UniformSymmetric, Mode::Ternary) => 8f64.sqrt() / 3.0,
        (Distribution::StandardNormal, Mode::Ternary) => {
            let objective = |tau: f64| 2.0 * normal_pdf(tau) / (2.0 * normal_tail(tau)).sqrt();
            let mut lo = 0.0_f64;
            let mut hi = 4.0_f64;
            for _ in 0..200 {
                let a = lo + (hi - lo) / 3.0;
                let b = hi - (hi - lo) / 3.0;
                if objective(a) < objective(b) {
                    lo = a;
                } else {
                    hi = b;
                }
            }
            objective(0.5 * (lo + hi))
        }
    }
}

/// All four (distribution, mode) limits, in a fixed presentation order.
pub fn reference_limits() -> [(Distribution, Mode, f64); 4] {
    let combos = [
        (Distribution::UniformSymmetric, Mode::Ternary),
        (Distribution::StandardNormal, Mode::Ternary),
        (Distribution::UniformSymmetric, Mode::Binary),
        (Distribution::StandardNormal, Mode::Binary),
    ];
    combos.map(|(d, m)| (d, m, reference_limit(d, m)))
}

/// CSV rendering of a sweep: fixed 7-column schema, LF line endings, floats
/// in shortest round-trip form.
pub fn sweep_to_csv(result: &SweepResult) -> String {
    let mut out = String::from("dimension,trial,mode,distribution,max_cosine,argmax_m,seed\n");
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.dimension, r.trial, r.mode, r.distribution, r.max_cosine, r.argmax_m, r.seed
        ));
    }
    out
}

pub fn export_sweep_csv(
    result: &SweepResult,
    path: impl AsRef<Path>,
) -> Result<(), ExperimentError> {
    std::fs::write(path, sweep_to_csv(result))?;
    Ok(())
}

/// CSV rendering of one similarity curve: `m,score` rows.
pub fn curve_to_csv(curve: &SimilarityCurve) -> String {
    let mut out = String::from("m,score\n");
    for (i, s) in curve.scores.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, s));
    }
    out
}

pub fn export_curve_csv(
    curve: &SimilarityCurve,
    path: impl AsRef<Path>,
) -> Result<(), ExperimentError> {
    std::fs::write(path, curve_to_csv(curve))?;
    Ok(())
}

/// Number of local maxima of a score sequence, counting a plateau once.
/// Used to measure (not assert) how often sampled curves are unimodal.
pub fn local_maximum_count(scores: &[f64]) -> usize {
    let mut compressed: Vec<f64> = Vec::with_capacity(scores.len());
    for &s in scores {
        if compressed.last() != Some(&s) {
            compressed.push(s);
        }
    }
    let n = compressed.len();
    (0..n)
        .filter(|&i| {
            (i == 0 || compressed[i] > compressed[i - 1])
                && (i == n - 1 || compressed[i] > compressed[i + 1])
        })
        .count()
}
