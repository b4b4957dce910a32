//! Partial outer codes over the trailing SPARC sections.
//!
//! A binary outer code of length `n_ldpc` covers the last `n_ldpc` bits of
//! the `L·log2(M)` message bits: the final `k_ldpc` user bits are replaced by
//! a systematic codeword whose parity occupies the trailing sections.
//! Decoding then runs in three stages:
//!
//! 1. AMP-decode `y`; the soft `β^T` holds per-section position posteriors.
//! 2. Convert the covered sections to per-bit posteriors, feed their LLRs to
//!    the min-sum decoder. An invalid outer decode falls back to the plain
//!    stage-1 hard decision.
//! 3. On success, rebuild the covered sections from the outer codeword,
//!    subtract their contribution from `y`, and AMP-decode the remaining
//!    (unprotected) sections at the much lower effective rate.
//!
//! When `n_ldpc` is not a multiple of `log2(M)` one section straddles the
//! protected/unprotected boundary; it is treated as unprotected when
//! rebuilding, so the second AMP pass decodes it too.

pub mod alist;
pub mod gen;
pub mod ldpc;

pub use alist::{load_alist, parse_alist, save_alist, write_alist};
pub use ldpc::{minsum_decode, minsum_decode_scaled, LdpcCode, ParityCheckMatrix, MINSUM_SCALE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::CodeParams;
use crate::codec::{
    hard_decision_beta, AmpDecoder, CodecError, DecoderConfig, DecoderState, Termination,
};
use crate::design::DesignOperator;
use crate::powalloc::PowerAllocation;

/// Bit-posterior LLRs are clamped to this magnitude to keep hard posteriors
/// finite.
pub const LLR_CLAMP: f64 = 30.0;

#[derive(Debug, Error)]
pub enum OuterError {
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("row {row} has no entries")]
    EmptyRow { row: usize },
    #[error("column {col} has no entries")]
    EmptyColumn { col: usize },
    #[error("row {row} references column {col}, but the matrix has {n_cols}")]
    ColumnOutOfRange {
        row: usize,
        col: usize,
        n_cols: usize,
    },
    #[error("{n_rows} checks on {n_cols} bits leave no information positions")]
    NotACode { n_cols: usize, n_rows: usize },
    #[error("parity-check matrix is rank deficient")]
    RankDeficient,
    #[error("expected {expected} user bits, got {got}")]
    UserBitCount { expected: usize, got: usize },
    #[error("expected {expected} LLRs, got {got}")]
    LlrCount { expected: usize, got: usize },
    #[error("LLR {index} is not finite")]
    NonFiniteLlr { index: usize },
    #[error("alist: missing {what}")]
    AlistTruncated { what: &'static str },
    #[error("alist: malformed token in {what}")]
    AlistToken { what: &'static str },
    #[error("alist: weight lists do not match the declared {n_cols}x{n_rows} size")]
    AlistWeightCount { n_cols: usize, n_rows: usize },
    #[error("alist: {what} {index} lists {got} entries, expected {expected}")]
    AlistWeightMismatch {
        what: &'static str,
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("alist: 1-based index {index} out of range in {what}")]
    AlistIndexRange { what: &'static str, index: usize },
    #[error("alist: row and column adjacency lists disagree")]
    AlistInconsistent,
    #[error("cannot build a {col_weight}-per-column {n_rows}x{n_cols} matrix")]
    BadGeneratorShape {
        n_cols: usize,
        n_rows: usize,
        col_weight: usize,
    },
    #[error("no usable {n_rows}x{n_cols} weight-{col_weight} matrix after 64 attempts")]
    GeneratorFailed {
        n_cols: usize,
        n_rows: usize,
        col_weight: usize,
    },
    #[error("outer code length {n_ldpc} exceeds the {total} message bits")]
    OuterCodeTooLarge { n_ldpc: usize, total: usize },
    #[error("outer code needs n > k >= 1, got ({n_ldpc}, {k_ldpc})")]
    BadOuterDimensions { n_ldpc: usize, k_ldpc: usize },
    #[error("M must be a power of two and at least 2, got {0}")]
    BadSectionSize(usize),
    #[error("expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("layout is for L={expected_l}, M={expected_m}")]
    LayoutMismatch { expected_l: usize, expected_m: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// How the `L` sections split around an `(n_ldpc, k_ldpc)` outer code.
///
/// All section counts are exact rationals with denominator `log2(M)`; the
/// `l_*` accessors expose them as floats. Bit-level offsets are what the
/// pipeline actually runs on, so fractional boundaries cost nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterCodeLayout {
    pub l: usize,
    pub m: usize,
    pub n_ldpc: usize,
    pub k_ldpc: usize,
}

impl OuterCodeLayout {
    pub fn plan(l: usize, m: usize, n_ldpc: usize, k_ldpc: usize) -> Result<Self, OuterError> {
        if m < 2 || !m.is_power_of_two() {
            return Err(OuterError::BadSectionSize(m));
        }
        if k_ldpc == 0 || n_ldpc <= k_ldpc {
            return Err(OuterError::BadOuterDimensions { n_ldpc, k_ldpc });
        }
        let total = l * m.ilog2() as usize;
        if n_ldpc > total {
            return Err(OuterError::OuterCodeTooLarge { n_ldpc, total });
        }
        Ok(OuterCodeLayout {
            l,
            m,
            n_ldpc,
            k_ldpc,
        })
    }

    pub fn bits_per_section(&self) -> usize {
        self.m.ilog2() as usize
    }

    pub fn total_bits(&self) -> usize {
        self.l * self.bits_per_section()
    }

    /// Bits carrying user data: everything except the outer parity.
    pub fn user_bits(&self) -> usize {
        self.total_bits() - (self.n_ldpc - self.k_ldpc)
    }

    /// Offset of the first outer-code bit in the message bitstream.
    pub fn ldpc_start_bit(&self) -> usize {
        self.total_bits() - self.n_ldpc
    }

    pub fn l_parity(&self) -> f64 {
        (self.n_ldpc - self.k_ldpc) as f64 / self.bits_per_section() as f64
    }

    pub fn l_protected(&self) -> f64 {
        self.k_ldpc as f64 / self.bits_per_section() as f64
    }

    pub fn l_ldpc(&self) -> f64 {
        self.n_ldpc as f64 / self.bits_per_section() as f64
    }

    pub fn l_user(&self) -> f64 {
        self.l as f64 - self.l_parity()
    }

    pub fn l_unprotected(&self) -> f64 {
        self.l_user() - self.l_protected()
    }

    /// Whether one section straddles the unprotected/protected boundary.
    pub fn fractional_boundary(&self) -> bool {
        self.ldpc_start_bit() % self.bits_per_section() != 0
    }

    /// Index of the straddling section, when there is one.
    pub fn boundary_section(&self) -> Option<usize> {
        self.fractional_boundary()
            .then(|| self.ldpc_start_bit() / self.bits_per_section())
    }

    /// First section whose bits are all covered by the outer code.
    pub fn first_full_ldpc_section(&self) -> usize {
        self.ldpc_start_bit().div_ceil(self.bits_per_section())
    }

    /// Sections the second AMP pass decodes: everything before the first
    /// fully covered section (including a straddling boundary section).
    pub fn stage3_active_sections(&self) -> usize {
        self.first_full_ldpc_section()
    }

    /// Overall user rate at SPARC code length `n`.
    pub fn user_rate(&self, n: usize) -> f64 {
        self.user_bits() as f64 / n as f64
    }

    /// Rate of the underlying SPARC, parity overhead included.
    pub fn sparc_rate(&self, n: usize) -> f64 {
        self.total_bits() as f64 / n as f64
    }
}

/// Bit posteriors of one section.
///
/// Given the non-negative section weights `β_ℓ`, returns `log2(M)` values
/// `p_b = P(bit b of the column index is 1)`, with `b = 0` the most
/// significant bit, by striding over the index blocks whose bit `b` is set.
/// An all-zero section carries no information and yields uniform `1/2`.
pub fn section_to_bit_posteriors(beta_section: &[f64]) -> Vec<f64> {
    let m = beta_section.len();
    assert!(m.is_power_of_two() && m >= 2, "section length must be 2^b");
    let logm = m.ilog2() as usize;
    let total: f64 = beta_section.iter().sum();
    if total <= 0.0 {
        return vec![0.5; logm];
    }
    let mut posteriors = vec![0.0; logm];
    let mut stride = 1usize;
    for logi in 0..logm {
        let b = logm - logi - 1;
        let mut k = stride;
        let mut mass = 0.0;
        while k < m {
            mass += beta_section[k..k + stride].iter().sum::<f64>();
            k += 2 * stride;
        }
        posteriors[b] = mass / total;
        stride <<= 1;
    }
    posteriors
}

/// `ln(p(0)/p(1))` clamped to `±LLR_CLAMP`.
pub fn bit_posteriors_to_llrs(p1: &[f64]) -> Vec<f64> {
    p1.iter()
        .map(|&p| ((1.0 - p) / p).ln().clamp(-LLR_CLAMP, LLR_CLAMP))
        .collect()
}

/// Rebuilds the covered part of `β` from an outer codeword.
///
/// Sections before the first fully covered one (including a fractional
/// boundary section) stay zero; each covered section gets `sqrt(n·P_ℓ)` at
/// the position its `log2(M)` codeword bits index.
pub fn build_beta_ldpc(
    codeword: &[bool],
    layout: &OuterCodeLayout,
    pa: &PowerAllocation,
    params: &CodeParams,
) -> Result<Vec<f64>, OuterError> {
    if codeword.len() != layout.n_ldpc {
        return Err(OuterError::DimensionMismatch {
            what: "outer codeword bits",
            expected: layout.n_ldpc,
            got: codeword.len(),
        });
    }
    if params.l != layout.l || params.m != layout.m {
        return Err(OuterError::LayoutMismatch {
            expected_l: layout.l,
            expected_m: layout.m,
        });
    }
    if pa.len() != layout.l {
        return Err(OuterError::DimensionMismatch {
            what: "power allocation sections",
            expected: layout.l,
            got: pa.len(),
        });
    }
    let logm = layout.bits_per_section();
    let start = layout.ldpc_start_bit();
    let mut beta = vec![0.0; params.ml()];
    for section in layout.first_full_ldpc_section()..layout.l {
        let offset = section * logm - start;
        let index = codeword[offset..offset + logm]
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize);
        beta[section * params.m + index] = (params.n as f64 * pa.per_section()[section]).sqrt();
    }
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeStageConfig {
    pub amp: DecoderConfig,
    pub ldpc_max_iters: usize,
    pub minsum_scale: f64,
}

impl Default for ThreeStageConfig {
    fn default() -> Self {
        ThreeStageConfig {
            amp: DecoderConfig::default(),
            ldpc_max_iters: 50,
            minsum_scale: MINSUM_SCALE,
        }
    }
}

/// Per-stage decoder summary kept in the pipeline result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub tau2_hat_trace: Vec<f64>,
    pub iterations_run: usize,
    pub termination: Termination,
}

impl From<&DecoderState> for StageTrace {
    fn from(state: &DecoderState) -> Self {
        StageTrace {
            tau2_hat_trace: state.tau2_hat_trace.clone(),
            iterations_run: state.iterations_run,
            termination: state.termination,
        }
    }
}

/// Outcome of the three-stage decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeStageResult {
    /// All `L·log2(M)` decoded bits (user bits followed by outer parity).
    pub bits: Vec<bool>,
    /// The leading `user_bits()` of `bits`.
    pub user_bits: Vec<bool>,
    pub ldpc_valid: bool,
    /// Hard decision of the first AMP pass over all sections.
    pub stage1_bits: Vec<bool>,
    pub stage1: StageTrace,
    /// Present only when the outer decode succeeded and stage 3 ran.
    pub stage3: Option<StageTrace>,
}

/// Runs the full three-stage decode of `y`.
pub fn three_stage_decode(
    y: &[f64],
    op: &DesignOperator,
    pa: &PowerAllocation,
    params: &CodeParams,
    layout: &OuterCodeLayout,
    code: &LdpcCode,
    cfg: &ThreeStageConfig,
) -> Result<ThreeStageResult, OuterError> {
    let stage1 = AmpDecoder::new(y, op, pa, params, cfg.amp)?.run()?;
    three_stage_from_stage1(&stage1.beta, StageTrace::from(&stage1), y, op, pa, params, layout, code, cfg)
}

/// Stages 2 and 3, starting from a given stage-1 soft output.
///
/// Exposed separately so the later stages can be exercised against synthetic
/// stage-1 states.
#[allow(clippy::too_many_arguments)]
pub fn three_stage_from_stage1(
    beta1: &[f64],
    stage1: StageTrace,
    y: &[f64],
    op: &DesignOperator,
    pa: &PowerAllocation,
    params: &CodeParams,
    layout: &OuterCodeLayout,
    code: &LdpcCode,
    cfg: &ThreeStageConfig,
) -> Result<ThreeStageResult, OuterError> {
    if code.n() != layout.n_ldpc || code.k() != layout.k_ldpc {
        return Err(OuterError::DimensionMismatch {
            what: "outer code length",
            expected: layout.n_ldpc,
            got: code.n(),
        });
    }
    if beta1.len() != params.ml() {
        return Err(OuterError::DimensionMismatch {
            what: "stage-1 beta entries",
            expected: params.ml(),
            got: beta1.len(),
        });
    }
    let logm = layout.bits_per_section();
    let start = layout.ldpc_start_bit();
    let stage1_bits = crate::code::message_to_bits(&hard_decision_beta(beta1, pa, params.n));

    // stage 2: section posteriors -> bit posteriors -> min-sum
    let first_sec = start / logm;
    let mut p1 = Vec::with_capacity(layout.n_ldpc);
    for section in first_sec..layout.l {
        let posteriors = section_to_bit_posteriors(&beta1[section * params.m..(section + 1) * params.m]);
        for (b, &p) in posteriors.iter().enumerate() {
            if section * logm + b >= start {
                p1.push(p);
            }
        }
    }
    let llrs = bit_posteriors_to_llrs(&p1);
    let (codeword, valid) = minsum_decode_scaled(code.h(), &llrs, cfg.ldpc_max_iters, cfg.minsum_scale)?;

    if !valid {
        // outer decode failed: the result is the plain AMP hard decision
        let user = stage1_bits[..layout.user_bits()].to_vec();
        return Ok(ThreeStageResult {
            bits: stage1_bits.clone(),
            user_bits: user,
            ldpc_valid: false,
            stage1_bits,
            stage1,
            stage3: None,
        });
    }

    // stage 3: subtract the covered sections, re-decode the rest
    let beta_ldpc = build_beta_ldpc(&codeword, layout, pa, params)?;
    let covered = op.forward(&beta_ldpc).map_err(CodecError::from)?;
    let y_residual: Vec<f64> = y.iter().zip(&covered).map(|(a, b)| a - b).collect();
    let active = layout.stage3_active_sections();
    let stage3 =
        AmpDecoder::with_active_sections(&y_residual, op, pa, params, cfg.amp, active)?.run()?;
    let stage3_hard = hard_decision_beta(&stage3.beta, pa, params.n);
    let stage3_bits = crate::code::message_to_bits(&stage3_hard);

    let mut bits = Vec::with_capacity(layout.total_bits());
    bits.extend_from_slice(&stage3_bits[..active * logm]);
    bits.extend(codeword[active * logm - start..].iter().copied());
    debug_assert_eq!(bits.len(), layout.total_bits());
    let user = bits[..layout.user_bits()].to_vec();

    Ok(ThreeStageResult {
        bits,
        user_bits: user,
        ldpc_valid: true,
        stage1_bits,
        stage1,
        stage3: Some(StageTrace::from(&stage3)),
    })
}

/// Splices outer-encoded bits into a full message bitstream: `user` bits
/// followed by the parity of the codeword protecting the trailing `k_ldpc`
/// of them.
pub fn outer_encode_bits(
    user: &[bool],
    layout: &OuterCodeLayout,
    code: &LdpcCode,
) -> Result<Vec<bool>, OuterError> {
    if user.len() != layout.user_bits() {
        return Err(OuterError::UserBitCount {
            expected: layout.user_bits(),
            got: user.len(),
        });
    }
    if code.n() != layout.n_ldpc || code.k() != layout.k_ldpc {
        return Err(OuterError::DimensionMismatch {
            what: "outer code length",
            expected: layout.n_ldpc,
            got: code.n(),
        });
    }
    let protected = &user[user.len() - layout.k_ldpc..];
    let codeword = code.encode(protected)?;
    let mut bits = Vec::with_capacity(layout.total_bits());
    bits.extend_from_slice(user);
    bits.extend_from_slice(&codeword[layout.k_ldpc..]);
    Ok(bits)
}
