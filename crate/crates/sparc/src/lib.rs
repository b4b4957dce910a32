//! Sparse regression codes (SPARCs) for the AWGN channel.
//!
//! A SPARC codeword is `A·β`, where `A` is an `n × ML` design matrix split
//! into `L` sections of `M` columns, and `β` carries exactly one non-zero per
//! section whose position encodes `log2(M)` message bits and whose value is
//! `sqrt(n·P_ℓ)` for a per-section power allocation `{P_ℓ}`.
//!
//! The crate provides:
//!
//! * [`code`] — code parameters, bit/index mapping, error metrics;
//! * [`powalloc`] — flat, exponential, modified-exponential, and iterative
//!   block power allocation design;
//! * [`design`] — dense Gaussian and fast Hadamard design operators with
//!   matching forward/adjoint products;
//! * [`codec`] — the encoder and the AMP decoder with online noise-variance
//!   tracking and early termination;
//! * [`analysis`] — state evolution and closed-form section/codeword error
//!   rate predictors;
//! * [`outer`] — partial LDPC outer codes: bit posterior extraction, min-sum
//!   decoding, and the three-stage decode pipeline;
//! * [`sim`] — a seeded Monte-Carlo simulation harness with CSV/JSON output.
//!
//! All randomized components are deterministic functions of explicit 64-bit
//! seeds (ChaCha8 streams), so results reproduce across runs and thread
//! counts.

pub mod analysis;
pub mod code;
pub mod codec;
pub mod design;
pub mod outer;
pub mod powalloc;
pub mod sim;

pub use code::{CodeParams, ErrorMetrics, MessageVector};
pub use design::{DesignOperator, OperatorKind};
pub use powalloc::PowerAllocation;
