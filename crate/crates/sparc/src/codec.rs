//! SPARC encoder and AMP decoder.
//!
//! The decoder iterates, starting from `β⁰ = 0`,
//!
//! ```text
//! z^t   = y − A·β^t + (z^{t−1}/τ̂²_{t−1})·(P − ‖β^t‖²/n)
//! τ̂²_t  = ‖z^t‖²/n
//! β^{t+1} = η(β^t + Aᵀ·z^t; τ̂²_t)
//! ```
//!
//! with the Onsager term absent at `t = 0` and `η` the section-wise softmax
//! denoiser. The residual-based `τ̂²_t` is the online estimate of the
//! effective noise variance; it tracks the actual decoding progress of a run
//! and drives the early-termination rule (stop once the change falls below
//! the smallest section power). When requested the denoiser can instead use
//! the precomputed state-evolution schedule, which is how the offline
//! variants are reproduced for A/B comparisons.
//!
//! Decoding can also be restricted to the first `active` sections, with the
//! power budget reduced accordingly; the outer-code pipeline uses this for
//! its second decoding pass after subtracting the contribution of the
//! sections fixed by the outer code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{se_trajectory, SeMode};
use crate::code::{argmax_per_section, CodeParams, MessageVector};
use crate::design::{DesignError, DesignOperator};
use crate::powalloc::PowerAllocation;

/// τ̂² below this is treated as an exact fix point (noiseless decodes hit it).
const TAU2_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("decoder diverged: non-finite τ̂² at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Why a decode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// Early-termination rule on the change of τ̂² between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStop {
    /// Stop when `|τ̂²_t − τ̂²_{t−1}|` falls below the smallest section power.
    MinSectionPower,
    /// Stop below a fixed absolute threshold.
    Absolute(f64),
    /// Always run to `max_iterations`.
    Off,
}

/// Where the denoiser gets its noise variance from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// Track `τ̂²_t = ‖z^t‖²/n` online (the default).
    Online,
    /// Use the precomputed state-evolution schedule.
    OfflineSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub max_iterations: usize,
    pub early_stop: EarlyStop,
    pub tau_mode: TauMode,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            max_iterations: 64,
            early_stop: EarlyStop::MinSectionPower,
            tau_mode: TauMode::Online,
        }
    }
}

/// Final decoder state plus the per-iteration τ̂² trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderState {
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
    pub tau2_hat_trace: Vec<f64>,
    pub iterations_run: usize,
    pub termination: Termination,
}

impl DecoderState {
    pub fn final_tau2(&self) -> f64 {
        *self.tau2_hat_trace.last().expect("decoder ran")
    }
}

/// `x = A·β`; the codeword for a message vector.
pub fn encode(message: &MessageVector, op: &DesignOperator) -> Result<Vec<f64>, CodecError> {
    Ok(op.forward(message.values())?)
}

/// Section-wise softmax denoiser.
///
/// Within section `ℓ`, entry `i` becomes
/// `sqrt(n·P_ℓ)·exp(s_i·sqrt(n·P_ℓ)/τ²) / Σ_j exp(s_j·sqrt(n·P_ℓ)/τ²)`,
/// stabilized by subtracting the section maximum before exponentiation, so
/// each section sums to `sqrt(n·P_ℓ)` exactly and overflow cannot occur.
pub fn denoise(s: &[f64], tau2: f64, pa: &PowerAllocation, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; s.len()];
    let m = s.len() / pa.len();
    denoise_into(&mut out, s, tau2, pa, n, m, pa.len());
    out
}

/// In-place denoise over the first `active` sections; the rest are zeroed.
fn denoise_into(
    out: &mut [f64],
    s: &[f64],
    tau2: f64,
    pa: &PowerAllocation,
    n: usize,
    m: usize,
    active: usize,
) {
    for (ell, &p_ell) in pa.per_section().iter().enumerate() {
        let section = &s[ell * m..(ell + 1) * m];
        let out_section = &mut out[ell * m..(ell + 1) * m];
        if ell >= active {
            out_section.fill(0.0);
            continue;
        }
        let c = (n as f64 * p_ell).sqrt();
        let scale = c / tau2;
        let max = section.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &v) in out_section.iter_mut().zip(section) {
            let w = ((v - max) * scale).exp();
            *o = w;
            total += w;
        }
        let norm = c / total;
        for o in out_section.iter_mut() {
            *o *= norm;
        }
    }
}

/// One AMP decode as a steppable state machine.
///
/// [`step`](Self::step) runs a single iteration and reports whether the
/// decoder finished; [`run`](Self::run) loops to completion. The effective
/// observation `s^t = β^t + Aᵀz^t` of the last step stays accessible, which
/// is what diagnostic comparisons against the transmitted message use.
pub struct AmpDecoder<'a> {
    y: &'a [f64],
    op: &'a DesignOperator,
    pa: &'a PowerAllocation,
    params: CodeParams,
    cfg: DecoderConfig,
    active: usize,
    p_eff: f64,
    stop_threshold: f64,
    schedule: Option<Vec<f64>>,
    beta: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau2_trace: Vec<f64>,
    tau2_used_prev: f64,
    iterations: usize,
    finished: Option<Termination>,
}

impl<'a> AmpDecoder<'a> {
    pub fn new(
        y: &'a [f64],
        op: &'a DesignOperator,
        pa: &'a PowerAllocation,
        params: &CodeParams,
        cfg: DecoderConfig,
    ) -> Result<Self, CodecError> {
        Self::with_active_sections(y, op, pa, params, cfg, params.l)
    }

    /// Decoder over the first `active` sections only: the rest of `β` is
    /// pinned to zero and the power budget in the Onsager term shrinks to
    /// the active total.
    pub fn with_active_sections(
        y: &'a [f64],
        op: &'a DesignOperator,
        pa: &'a PowerAllocation,
        params: &CodeParams,
        cfg: DecoderConfig,
        active: usize,
    ) -> Result<Self, CodecError> {
        if y.len() != params.n {
            return Err(CodecError::DimensionMismatch {
                what: "channel output samples",
                expected: params.n,
                got: y.len(),
            });
        }
        if op.n() != params.n || op.columns() != params.ml() {
            return Err(CodecError::DimensionMismatch {
                what: "operator rows",
                expected: params.n,
                got: op.n(),
            });
        }
        if pa.len() != params.l {
            return Err(CodecError::DimensionMismatch {
                what: "power allocation sections",
                expected: params.l,
                got: pa.len(),
            });
        }
        let active = active.min(params.l);
        let active_powers = &pa.per_section()[..active];
        let p_eff: f64 = active_powers.iter().sum();
        let stop_threshold = match cfg.early_stop {
            EarlyStop::MinSectionPower => active_powers.last().copied().unwrap_or(0.0),
            EarlyStop::Absolute(t) => t,
            EarlyStop::Off => 0.0,
        };
        let schedule = match cfg.tau_mode {
            TauMode::Online => None,
            TauMode::OfflineSe => {
                let tol = 1e-6 * (params.sigma2 + p_eff);
                let traj = se_trajectory(pa, params, SeMode::Asymptotic, tol, cfg.max_iterations);
                Some(traj.tau2)
            }
        };
        Ok(AmpDecoder {
            y,
            op,
            pa,
            params: *params,
            cfg,
            active,
            p_eff,
            stop_threshold,
            schedule,
            beta: vec![0.0; params.ml()],
            z: Vec::new(),
            s: vec![0.0; params.ml()],
            tau2_trace: Vec::new(),
            tau2_used_prev: 0.0,
            iterations: 0,
            finished: None,
        })
    }

    /// Runs one iteration: residual, τ̂² update, denoise. Returns the
    /// termination reason once the decoder is done.
    pub fn step(&mut self) -> Result<Option<Termination>, CodecError> {
        if let Some(t) = self.finished {
            return Ok(Some(t));
        }
        let t = self.iterations;
        let n = self.params.n as f64;

        if t == 0 {
            self.z = self.y.to_vec();
        } else {
            let az = self.op.forward(&self.beta)?;
            let beta_power: f64 = self.beta.iter().map(|b| b * b).sum::<f64>() / n;
            let onsager = (self.p_eff - beta_power) / self.tau2_used_prev;
            for ((zi, &yi), &ai) in self.z.iter_mut().zip(self.y).zip(&az) {
                *zi = yi - ai + onsager * *zi;
            }
        }
        let tau2_hat = self.z.iter().map(|v| v * v).sum::<f64>() / n;
        if !tau2_hat.is_finite() {
            return Err(CodecError::NonFinite { iteration: t });
        }
        self.tau2_trace.push(tau2_hat);

        let tau2_use = match &self.schedule {
            None => tau2_hat,
            Some(sched) => sched[t.min(sched.len() - 1)],
        };
        if tau2_use < TAU2_FLOOR {
            // residual is (numerically) zero; β already explains y
            self.finished = Some(Termination::Converged);
            return Ok(self.finished);
        }

        let adj = self.op.adjoint(&self.z)?;
        for ((si, &bi), &ai) in self.s.iter_mut().zip(&self.beta).zip(&adj) {
            *si = bi + ai;
        }
        denoise_into(
            &mut self.beta,
            &self.s,
            tau2_use,
            self.pa,
            self.params.n,
            self.params.m,
            self.active,
        );
        self.tau2_used_prev = tau2_use;
        self.iterations += 1;

        let trace = &self.tau2_trace;
        let offline_exhausted = self
            .schedule
            .as_ref()
            .is_some_and(|sched| self.iterations >= sched.len());
        if self.iterations >= self.cfg.max_iterations {
            self.finished = Some(Termination::MaxIterations);
        } else if offline_exhausted {
            self.finished = Some(Termination::Converged);
        } else if self.schedule.is_none()
            && t >= 1
            && (trace[t] - trace[t - 1]).abs() < self.stop_threshold
        {
            self.finished = Some(Termination::Converged);
        }
        Ok(self.finished)
    }

    /// Loops [`step`](Self::step) to completion and takes the final state.
    pub fn run(mut self) -> Result<DecoderState, CodecError> {
        loop {
            if let Some(termination) = self.step()? {
                return Ok(DecoderState {
                    beta: self.beta,
                    z: self.z,
                    tau2_hat_trace: self.tau2_trace,
                    iterations_run: self.iterations,
                    termination,
                });
            }
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// `s^t = β^t + Aᵀz^t` from the most recent step.
    pub fn effective_observation(&self) -> &[f64] {
        &self.s
    }

    pub fn tau2_trace(&self) -> &[f64] {
        &self.tau2_trace
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations
    }
}

/// Full AMP decode of `y`.
pub fn amp_decode(
    y: &[f64],
    op: &DesignOperator,
    pa: &PowerAllocation,
    params: &CodeParams,
    cfg: DecoderConfig,
) -> Result<DecoderState, CodecError> {
    AmpDecoder::new(y, op, pa, params, cfg)?.run()
}

/// Hard decision on a soft `β`: the argmax of each section gets
/// `sqrt(n·P_ℓ)`, everything else zero; ties break to the lowest index.
pub fn hard_decision_beta(beta: &[f64], pa: &PowerAllocation, n: usize) -> MessageVector {
    let l = pa.len();
    let m = beta.len() / l;
    let indices = argmax_per_section(beta, l, m);
    let mut values = vec![0.0; beta.len()];
    for (ell, (&idx, &p_ell)) in indices.iter().zip(pa.per_section()).enumerate() {
        values[ell * m + idx] = (n as f64 * p_ell).sqrt();
    }
    MessageVector::from_raw(values, l, m)
}

/// Hard decision on a finished decode.
pub fn hard_decision(state: &DecoderState, pa: &PowerAllocation, n: usize) -> MessageVector {
    hard_decision_beta(&state.beta, pa, n)
}

/// Runtime estimate of the number of undecoded sections.
///
/// `τ̂²_T − σ²` estimates the total power of the incorrectly decoded
/// sections; since the allocation is non-increasing, the largest `k` whose
/// `k` smallest section powers fit under that budget (plus `slack`, in power
/// units) bounds the section error count.
pub fn estimate_remaining_errors(
    state: &DecoderState,
    pa: &PowerAllocation,
    sigma2: f64,
    slack: f64,
) -> usize {
    let gap = state.final_tau2() - sigma2;
    if gap <= 0.0 {
        return 0;
    }
    let budget = gap + slack;
    let mut cum = 0.0;
    let mut k = 0;
    for &p_ell in pa.per_section().iter().rev() {
        cum += p_ell;
        if cum <= budget * (1.0 + 1e-9) {
            k += 1;
        } else {
            break;
        }
    }
    k
}
