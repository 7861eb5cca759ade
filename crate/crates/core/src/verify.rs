//! Self-check harness behind `tnt verify`: brute-force oracle equivalence,
//! the scalar residual ordering chain, and pack/unpack round-trips, all on
//! seeded random inputs. Reports the first counterexample vector verbatim.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pipeline::{pack_codes, unpack_codes, PipelineError};
use crate::scalar::{dual_scalar, residual_error, single_scalar, ScalarSet};
use crate::ternary::{
    brute_force_ternarize, ternarize, TernaryError, BRUTE_FORCE_MAX_DIM,
};

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Random vectors per (dimension, distribution) cell of the oracle check.
    pub oracle_trials: usize,
    /// Largest dimension handed to the brute-force oracle (<= 12).
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            oracle_trials: 200,
            max_dim: 10,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Packing routine under test; injectable so the harness itself can be
/// checked against a deliberately corrupted implementation.
pub type PackFn = fn(&[i8]) -> Result<Vec<u8>, PipelineError>;

pub fn run(options: &VerifyOptions) -> Result<VerifyReport, TernaryError> {
    run_with_packer(options, pack_codes)
}

pub fn run_with_packer(
    options: &VerifyOptions,
    pack: PackFn,
) -> Result<VerifyReport, TernaryError> {
    if options.max_dim > BRUTE_FORCE_MAX_DIM {
        return Err(TernaryError::DimensionTooLarge {
            n: options.max_dim,
            max: BRUTE_FORCE_MAX_DIM,
        });
    }
    Ok(VerifyReport {
        checks: vec![
            oracle_check(options),
            scalar_chain_check(options),
            pack_check(options, pack),
        ],
    })
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, normal: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if normal {
                rng.sample(rand_distr::StandardNormal)
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect()
}

/// ternarize must attain the enumerated 3^N - 1 maximum within 1e-12 on
/// every instance.
fn oracle_check(options: &VerifyOptions) -> CheckOutcome {
    let mut instances = 0usize;
    for n in 2..=options.max_dim {
        for dist_tag in 0..2u64 {
            for trial in 0..options.oracle_trials {
                let stream = ((n as u64) << 33) | (trial as u64) << 1 | dist_tag;
                let mut rng = rng_for(options.seed, stream);
                let w = random_vector(&mut rng, n, dist_tag == 1);
                if w.iter().all(|&v| v == 0.0) {
                    continue;
                }
                instances += 1;
                let fast = match ternarize(&w) {
                    Ok(r) => r,
                    Err(e) => {
                        return CheckOutcome {
                            name: "oracle-equivalence",
                            passed: false,
                            detail: format!("ternarize failed on {w:?}: {e}"),
                        }
                    }
                };
                let brute = brute_force_ternarize(&w).expect("dimension guarded");
                if (fast.cosine - brute.cosine).abs() > 1e-12 {
                    return CheckOutcome {
                        name: "oracle-equivalence",
                        passed: false,
                        detail: format!(
                            "counterexample w = {w:?}: ternarize {} vs brute force {}",
                            fast.cosine, brute.cosine
                        ),
                    };
                }
            }
        }
    }
    CheckOutcome {
        name: "oracle-equivalence",
        passed: true,
        detail: format!("{instances} instances matched within 1e-12"),
    }
}

/// residual(dual-or-fallback) <= residual(single) <= residual(none) for
/// t = ternarize(w).
fn scalar_chain_check(options: &VerifyOptions) -> CheckOutcome {
    let trials = options.oracle_trials.max(200);
    for trial in 0..trials {
        let mut rng = rng_for(options.seed, 0x5CA1A0 + trial as u64);
        let n = rng.gen_range(2..64);
        let w = random_vector(&mut rng, n, trial % 2 == 0);
        let Ok(r) = ternarize(&w) else { continue };
        let codes = r.vector.codes();
        let single = single_scalar(&w, codes).expect("valid codes");
        let dual = dual_scalar(&w, codes).expect("valid codes");
        let e_none = residual_error(&w, codes, &ScalarSet::None).expect("valid codes");
        let e_single = residual_error(&w, codes, &single).expect("valid codes");
        let e_dual = residual_error(&w, codes, &dual).expect("valid codes");
        if e_dual > e_single + 1e-12 || e_single > e_none + 1e-12 {
            return CheckOutcome {
                name: "scalar-ordering-chain",
                passed: false,
                detail: format!(
                    "counterexample w = {w:?}: dual {e_dual} single {e_single} none {e_none}"
                ),
            };
        }
    }
    CheckOutcome {
        name: "scalar-ordering-chain",
        passed: true,
        detail: format!("{trials} instances ordered dual <= single <= none"),
    }
}

/// unpack(pack(codes)) must reproduce the codes exactly.
fn pack_check(options: &VerifyOptions, pack: PackFn) -> CheckOutcome {
    let trials = options.oracle_trials.max(200);
    for trial in 0..trials {
        let mut rng = rng_for(options.seed, 0x9ACC + trial as u64);
        let len = rng.gen_range(0..512);
        let codes: Vec<i8> = (0..len).map(|_| rng.gen_range(-1i8..=1)).collect();
        let packed = match pack(&codes) {
            Ok(b) => b,
            Err(e) => {
                return CheckOutcome {
                    name: "pack-round-trip",
                    passed: false,
                    detail: format!("counterexample codes = {codes:?}: pack failed: {e}"),
                }
            }
        };
        match unpack_codes(&packed, codes.len()) {
            Ok(back) if back == codes => {}
            Ok(back) => {
                return CheckOutcome {
                    name: "pack-round-trip",
                    passed: false,
                    detail: format!(
                        "counterexample codes = {codes:?}: unpacked to {back:?} via bytes {packed:?}"
                    ),
                }
            }
            Err(e) => {
                return CheckOutcome {
                    name: "pack-round-trip",
                    passed: false,
                    detail: format!("counterexample codes = {codes:?}: unpack failed: {e}"),
                }
            }
        }
    }
    CheckOutcome {
        name: "pack-round-trip",
        passed: true,
        detail: format!("{trials} random streams round-tripped"),
    }
}

/// Deliberately corrupted packer for harness self-tests: flips the first
/// code of every stream to zero before packing.
pub fn corrupted_pack(codes: &[i8]) -> Result<Vec<u8>, PipelineError> {
    let mut copy = codes.to_vec();
    if let Some(first) = copy.first_mut() {
        *first = 0;
    }
    pack_codes(&copy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let report = run(&VerifyOptions {
            oracle_trials: 25,
            ..VerifyOptions::default()
        })
        .unwrap();
        assert!(report.passed(), "{:#?}", report.checks);
        assert_eq!(report.checks.len(), 3);
    }

    #[test]
    fn max_dim_guard() {
        let err = run(&VerifyOptions {
            max_dim: 13,
            ..VerifyOptions::default()
        })
        .unwrap_err();
        assert_eq!(err, TernaryError::DimensionTooLarge { n: 13, max: 12 });
    }

    #[test]
    fn corrupted_packer_is_caught_with_counterexample() {
        let report = run_with_packer(
            &VerifyOptions {
                oracle_trials: 25,
                ..VerifyOptions::default()
            },
            corrupted_pack,
        )
        .unwrap();
        assert!(!report.passed());
        let failed = report.checks.iter().find(|c| !c.passed).unwrap();
        assert_eq!(failed.name, "pack-round-trip");
        assert!(failed.detail.contains("counterexample codes = ["));
    }
}
