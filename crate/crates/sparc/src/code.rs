//! Code parameters, message-vector construction, and error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powalloc::PowerAllocation;

/// Maximum relative mismatch tolerated between `n·R` and `L·log2(M)`.
pub const RATE_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum CodeError {
    #[error("L must be at least 1")]
    BadSectionCount,
    #[error("M must be a power of two and at least 2, got {0}")]
    BadSectionSize(usize),
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
    #[error("power must be positive, got {0}")]
    BadPower(f64),
    #[error("noise variance must be non-negative, got {0}")]
    BadNoiseVariance(f64),
    #[error("code length must be at least 1")]
    BadCodeLength,
    #[error("n·R = {got} is inconsistent with L·log2(M) = {want}")]
    RateInconsistent { got: f64, want: f64 },
    #[error("expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("section index {index} out of range for M = {m}")]
    IndexOutOfRange { index: usize, m: usize },
}

/// Dimensional parameters of a SPARC: `(L, M, n, R, P, σ²)`.
///
/// `rate` is the realized rate `L·log2(M)/n`; `snr` and capacity are always
/// derived from `power` and `sigma2`, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub rate: f64,
    pub power: f64,
    pub sigma2: f64,
}

impl CodeParams {
    pub fn new(
        l: usize,
        m: usize,
        n: usize,
        rate: f64,
        power: f64,
        sigma2: f64,
    ) -> Result<Self, CodeError> {
        if l == 0 {
            return Err(CodeError::BadSectionCount);
        }
        if m < 2 || !m.is_power_of_two() {
            return Err(CodeError::BadSectionSize(m));
        }
        if n == 0 {
            return Err(CodeError::BadCodeLength);
        }
        if !(rate > 0.0) {
            return Err(CodeError::BadRate(rate));
        }
        if !(power > 0.0) {
            return Err(CodeError::BadPower(power));
        }
        if !(sigma2 >= 0.0) {
            return Err(CodeError::BadNoiseVariance(sigma2));
        }
        let bits = (l * m.ilog2() as usize) as f64;
        if ((n as f64) * rate - bits).abs() > RATE_CONSISTENCY_TOL * bits {
            return Err(CodeError::RateInconsistent {
                got: n as f64 * rate,
                want: bits,
            });
        }
        Ok(CodeParams {
            l,
            m,
            n,
            rate,
            power,
            sigma2,
        })
    }

    /// Builds params from a nominal rate by rounding `n = L·log2(M)/R` to the
    /// nearest integer; the stored rate is the realized one.
    pub fn from_nominal_rate(
        l: usize,
        m: usize,
        nominal_rate: f64,
        power: f64,
        sigma2: f64,
    ) -> Result<Self, CodeError> {
        let (n, realized) = derive_code_length(l, m, nominal_rate)?;
        Self::new(l, m, n, realized, power, sigma2)
    }

    pub fn snr(&self) -> f64 {
        if self.sigma2 == 0.0 {
            f64::INFINITY
        } else {
            self.power / self.sigma2
        }
    }

    /// AWGN capacity `½·log2(1 + snr)` in bits per channel use per real
    /// dimension.
    pub fn capacity(&self) -> f64 {
        0.5 * (1.0 + self.snr()).log2()
    }

    pub fn bits_per_section(&self) -> usize {
        self.m.ilog2() as usize
    }

    pub fn total_bits(&self) -> usize {
        self.l * self.bits_per_section()
    }

    pub fn ml(&self) -> usize {
        self.l * self.m
    }
}

/// Rounds `L·log2(M)/R` to the nearest integer code length.
///
/// Returns `(n, realized_rate)`; the realized rate `L·log2(M)/n` differs from
/// the nominal one only by the rounding of `n`.
pub fn derive_code_length(l: usize, m: usize, rate: f64) -> Result<(usize, f64), CodeError> {
    if l == 0 {
        return Err(CodeError::BadSectionCount);
    }
    if m < 2 || !m.is_power_of_two() {
        return Err(CodeError::BadSectionSize(m));
    }
    if !(rate > 0.0) {
        return Err(CodeError::BadRate(rate));
    }
    let bits = (l * m.ilog2() as usize) as f64;
    let n = (bits / rate).round().max(1.0) as usize;
    Ok((n, bits / n as f64))
}

/// Converts Eb/N0 in dB to snr = P/σ² via `snr = 2·R·Eb/N0`.
pub fn ebn0_db_to_snr(ebn0_db: f64, rate: f64) -> Result<f64, CodeError> {
    if !(rate > 0.0) {
        return Err(CodeError::BadRate(rate));
    }
    Ok(2.0 * rate * 10f64.powf(ebn0_db / 10.0))
}

/// Inverse of [`ebn0_db_to_snr`].
pub fn snr_to_ebn0_db(snr: f64, rate: f64) -> f64 {
    10.0 * (snr / (2.0 * rate)).log10()
}

/// A message vector `β`: one non-zero of value `sqrt(n·P_ℓ)` per section.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageVector {
    values: Vec<f64>,
    l: usize,
    m: usize,
}

impl MessageVector {
    /// Builds `β` from the non-zero position of each section.
    pub fn from_indices(
        indices: &[usize],
        pa: &PowerAllocation,
        params: &CodeParams,
    ) -> Result<Self, CodeError> {
        if indices.len() != params.l {
            return Err(CodeError::DimensionMismatch {
                what: "section indices",
                expected: params.l,
                got: indices.len(),
            });
        }
        if pa.len() != params.l {
            return Err(CodeError::DimensionMismatch {
                what: "power allocation sections",
                expected: params.l,
                got: pa.len(),
            });
        }
        let mut values = vec![0.0; params.ml()];
        for (ell, (&idx, &p_ell)) in indices.iter().zip(pa.per_section()).enumerate() {
            if idx >= params.m {
                return Err(CodeError::IndexOutOfRange {
                    index: idx,
                    m: params.m,
                });
            }
            values[ell * params.m + idx] = (params.n as f64 * p_ell).sqrt();
        }
        Ok(MessageVector {
            values,
            l: params.l,
            m: params.m,
        })
    }

    pub(crate) fn from_raw(values: Vec<f64>, l: usize, m: usize) -> Self {
        debug_assert_eq!(values.len(), l * m);
        MessageVector { values, l, m }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Position of the largest entry in each section (ties to the lowest
    /// index). For a well-formed message this is the non-zero position.
    pub fn section_indices(&self) -> Vec<usize> {
        argmax_per_section(&self.values, self.l, self.m)
    }
}

pub(crate) fn argmax_per_section(values: &[f64], l: usize, m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(l);
    for section in values.chunks_exact(m).take(l) {
        let mut best = 0;
        for (j, &v) in section.iter().enumerate() {
            if v > section[best] {
                best = j;
            }
        }
        out.push(best);
    }
    out
}

/// Splits `bits` into big-endian chunks of `log2(M)` bits, one per section.
pub fn bits_to_indices(bits: &[bool], l: usize, m: usize) -> Result<Vec<usize>, CodeError> {
    let logm = m.ilog2() as usize;
    if bits.len() != l * logm {
        return Err(CodeError::DimensionMismatch {
            what: "message bits",
            expected: l * logm,
            got: bits.len(),
        });
    }
    Ok(bits
        .chunks_exact(logm)
        .map(|chunk| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize))
        .collect())
}

/// Inverse of [`bits_to_indices`]: big-endian bits of each section index.
pub fn indices_to_bits(indices: &[usize], m: usize) -> Vec<bool> {
    let logm = m.ilog2() as usize;
    let mut bits = Vec::with_capacity(indices.len() * logm);
    for &idx in indices {
        for b in (0..logm).rev() {
            bits.push(idx >> b & 1 == 1);
        }
    }
    bits
}

/// Encodes `L·log2(M)` input bits into a message vector.
///
/// Chunk `ℓ` of the bitstream selects the non-zero column of section `ℓ` as a
/// big-endian integer.
pub fn bits_to_message(
    bits: &[bool],
    pa: &PowerAllocation,
    params: &CodeParams,
) -> Result<MessageVector, CodeError> {
    let indices = bits_to_indices(bits, params.l, params.m)?;
    MessageVector::from_indices(&indices, pa, params)
}

/// Recovers the input bitstream from a message vector.
pub fn message_to_bits(message: &MessageVector) -> Vec<bool> {
    indices_to_bits(&message.section_indices(), message.m)
}

/// Section, bit, and codeword error counts for one decode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub section_errors: usize,
    pub esec: f64,
    pub eber: f64,
    pub cw_error: bool,
}

/// Compares a decoded message against the truth.
///
/// Section errors count sections whose non-zero position differs; the bit
/// error rate is measured exactly from the bit vectors rather than via the
/// `½·Esec` approximation.
pub fn measure_errors(
    beta_hat: &MessageVector,
    beta_true: &MessageVector,
    bits_hat: &[bool],
    bits_true: &[bool],
) -> Result<ErrorMetrics, CodeError> {
    if beta_hat.l != beta_true.l || beta_hat.m != beta_true.m {
        return Err(CodeError::DimensionMismatch {
            what: "message sections",
            expected: beta_true.l,
            got: beta_hat.l,
        });
    }
    if bits_hat.len() != bits_true.len() {
        return Err(CodeError::DimensionMismatch {
            what: "bits",
            expected: bits_true.len(),
            got: bits_hat.len(),
        });
    }
    let section_errors = beta_hat
        .section_indices()
        .iter()
        .zip(beta_true.section_indices())
        .filter(|&(&a, b)| a != b)
        .count();
    let bit_errors = bits_hat
        .iter()
        .zip(bits_true)
        .filter(|&(a, b)| a != b)
        .count();
    Ok(ErrorMetrics {
        section_errors,
        esec: section_errors as f64 / beta_true.l as f64,
        eber: if bits_true.is_empty() {
            0.0
        } else {
            bit_errors as f64 / bits_true.len() as f64
        },
        cw_error: section_errors > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_params(l: usize, m: usize, rate: f64) -> (CodeParams, PowerAllocation) {
        let params = CodeParams::from_nominal_rate(l, m, rate, 4.0, 1.0).unwrap();
        let pa = PowerAllocation::flat(l, params.power).unwrap();
        (params, pa)
    }

    #[test]
    fn derive_code_length_examples() {
        assert_eq!(derive_code_length(1024, 512, 1.5).unwrap().0, 6144);
        assert_eq!(derive_code_length(2, 2, 1.0).unwrap().0, 2);
        assert_eq!(derive_code_length(896, 256, 1.0).unwrap().0, 7168);
    }

    #[test]
    fn derive_code_length_rejects_bad_inputs() {
        assert!(derive_code_length(4, 3, 1.0).is_err());
        assert!(derive_code_length(4, 8, 0.0).is_err());
        assert!(derive_code_length(4, 8, -1.0).is_err());
    }

    #[test]
    fn ebn0_examples() {
        let snr = ebn0_db_to_snr(10.0 * 5f64.log10(), 1.5).unwrap();
        assert!((snr - 15.0).abs() < 1e-9);
        assert!((ebn0_db_to_snr(0.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
        let snr = ebn0_db_to_snr(5.7, 1.5).unwrap();
        assert!((snr - 11.146).abs() < 1e-3);
        assert!((snr_to_ebn0_db(snr, 1.5) - 5.7).abs() < 1e-9);
        assert!(ebn0_db_to_snr(1.0, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(CodeParams::new(4, 8, 12, 1.0, 1.0, 1.0).is_ok());
        // n·R far from L·log2(M)
        assert!(CodeParams::new(4, 8, 13, 1.0, 1.0, 1.0).is_err());
        assert!(CodeParams::new(4, 7, 12, 1.0, 1.0, 1.0).is_err());
        assert!(CodeParams::new(4, 8, 12, 1.0, 1.0, -1.0).is_err());
        let p = CodeParams::new(4, 8, 12, 1.0, 15.0, 1.0).unwrap();
        assert!((p.snr() - 15.0).abs() < 1e-12);
        assert!((p.capacity() - 2.0).abs() < 1e-12);
        let noiseless = CodeParams::new(4, 8, 12, 1.0, 15.0, 0.0).unwrap();
        assert!(noiseless.snr().is_infinite());
    }

    #[test]
    fn bit_mapping_examples() {
        let (params, pa) = flat_params(1, 4, 1.0);
        let msg = bits_to_message(&[false, false], &pa, &params).unwrap();
        assert_eq!(msg.section_indices(), vec![0]);
        let msg = bits_to_message(&[true, true], &pa, &params).unwrap();
        assert_eq!(msg.section_indices(), vec![3]);

        let (params, pa) = flat_params(2, 4, 1.0);
        let bits = [false, true, true, false];
        let msg = bits_to_message(&bits, &pa, &params).unwrap();
        assert_eq!(msg.section_indices(), vec![1, 2]);
        assert_eq!(message_to_bits(&msg), bits.to_vec());
        assert!(bits_to_message(&bits[..3], &pa, &params).is_err());
    }

    #[test]
    fn message_nonzero_values() {
        let params = CodeParams::from_nominal_rate(2, 4, 1.0, 3.0, 1.0).unwrap();
        let pa = PowerAllocation::exponential(2, 3.0, 1.0).unwrap();
        let msg = MessageVector::from_indices(&[0, 3], &pa, &params).unwrap();
        // values are exactly sqrt(n·P_ℓ)
        assert_eq!(msg.values()[0], (params.n as f64 * 2.0).sqrt());
        assert_eq!(msg.values()[7], (params.n as f64 * 1.0).sqrt());
        assert_eq!(msg.values().iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn exhaustive_round_trip_small() {
        for (l, m) in [(1, 2), (1, 16), (2, 2), (2, 16)] {
            let (params, pa) = flat_params(l, m, 1.0);
            let logm = m.ilog2() as usize;
            for word in 0..(1usize << (l * logm)) {
                let bits: Vec<bool> = (0..l * logm).rev().map(|b| word >> b & 1 == 1).collect();
                let msg = bits_to_message(&bits, &pa, &params).unwrap();
                assert_eq!(message_to_bits(&msg), bits);
            }
        }
    }

    #[test]
    fn measure_errors_examples() {
        let (params, pa) = flat_params(2, 4, 1.0);
        let a = bits_to_message(&[false, true, true, false], &pa, &params).unwrap();
        let same = measure_errors(&a, &a, &[true, false], &[true, false]).unwrap();
        assert_eq!(same.section_errors, 0);
        assert!(!same.cw_error);
        assert_eq!(same.eber, 0.0);

        let b = bits_to_message(&[false, true, true, true], &pa, &params).unwrap();
        let one = measure_errors(
            &b,
            &a,
            &[false, true, true, true],
            &[false, true, true, false],
        )
        .unwrap();
        assert_eq!(one.section_errors, 1);
        assert_eq!(one.esec, 0.5);
        assert!(one.cw_error);
        assert_eq!(one.eber, 0.25);

        let c = bits_to_message(&[true, false, false, true], &pa, &params).unwrap();
        let all = measure_errors(
            &c,
            &a,
            &[true, false, false, true],
            &[false, true, true, false],
        )
        .unwrap();
        assert_eq!(all.esec, 1.0);
    }

    proptest! {
        #[test]
        fn round_trip_random(l in 1usize..24, logm in 1usize..8, seed in any::<u64>()) {
            let m = 1usize << logm;
            let (params, pa) = flat_params(l, m, 1.0);
            let mut state = seed;
            let bits: Vec<bool> = (0..l * logm).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                state >> 63 == 1
            }).collect();
            let msg = bits_to_message(&bits, &pa, &params).unwrap();
            prop_assert_eq!(message_to_bits(&msg), bits);
        }

        #[test]
        fn realized_rate_close(l in 1usize..4096, logm in 1usize..14, rate in 0.1f64..2.0) {
            let m = 1usize << logm;
            prop_assume!(l * logm >= 1000);
            let (n, realized) = derive_code_length(l, m, rate).unwrap();
            prop_assert!(n >= 1);
            prop_assert!((realized - rate).abs() / rate <= 1e-3);
        }
    }
}
