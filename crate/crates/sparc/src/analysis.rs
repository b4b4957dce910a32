//! State evolution and error-rate prediction.
//!
//! State evolution (SE) is the scalar recursion
//! `τ²_0 = σ² + P`, `τ²_t = σ² + P·(1 − x(τ_{t−1}))`,
//! where `x(τ)` is the expected power-weighted fraction of sections decodable
//! at effective noise variance `τ²`. Two evaluations of `x` are provided: a
//! large-system threshold approximation and a Monte-Carlo estimate of the
//! exact expectation. On top of SE sit two section-error predictors: the SE
//! prediction evaluated by Monte Carlo, and a closed form that replaces the
//! `M`-variable expectation with a one-dimensional Gaussian integral, which
//! this module evaluates by Gauss–Hermite quadrature.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI, SQRT_2};
use thiserror::Error;

use crate::code::CodeParams;
use crate::powalloc::PowerAllocation;

/// Default number of Gauss–Hermite nodes for the closed-form predictor;
/// enough that doubling it moves the per-section estimates by less than
/// 1e-8 for codes of practical size.
pub const DEFAULT_QUAD_POINTS: usize = 161;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least one quadrature point")]
    NoQuadPoints,
    #[error("Gauss–Hermite root finding did not converge for {points} points")]
    QuadratureNoConvergence { points: usize },
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("need at least one Monte-Carlo sample")]
    NoSamples,
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// How to evaluate `x(τ)` inside the SE recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SeMode {
    Asymptotic,
    MonteCarlo { samples: usize, seed: u64 },
}

/// The SE trace: `tau2[t]` and `x[t] = x(τ_t)`, aligned index by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeTrajectory {
    pub tau2: Vec<f64>,
    pub x: Vec<f64>,
    pub converged: bool,
}

impl SeTrajectory {
    /// Number of SE steps taken (length of the trace minus the initial
    /// state).
    pub fn iterations(&self) -> usize {
        self.tau2.len() - 1
    }

    pub fn final_tau2(&self) -> f64 {
        *self.tau2.last().expect("trace is non-empty")
    }
}

/// Threshold approximation of `x(τ)`: the power-weighted fraction of sections
/// with `L·P_ℓ ≥ 2·R·τ²·ln 2`.
///
/// Sections sitting exactly at the threshold count as decodable (the
/// iterative allocation places blocks there by construction), so the
/// comparison carries a relative slack of 1e-9.
pub fn se_x_asymptotic(tau2: f64, pa: &PowerAllocation, rate: f64) -> f64 {
    let l = pa.len() as f64;
    let p_total = pa.total();
    let threshold = 2.0 * rate * tau2 * LN_2 * (1.0 - 1e-9);
    pa.per_section()
        .iter()
        .filter(|&&p_ell| l * p_ell >= threshold)
        .map(|&p_ell| p_ell / p_total)
        .sum()
}

/// Groups consecutive equal section powers; allocations are non-increasing so
/// equal powers are always adjacent.
fn power_groups(pa: &PowerAllocation) -> Vec<(f64, usize)> {
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for &p in pa.per_section() {
        match groups.last_mut() {
            Some((v, count)) if *v == p => *count += 1,
            _ => groups.push((p, 1)),
        }
    }
    groups
}

/// Per-sample evaluation of the weighted section-success expectation.
///
/// For each group `g` with signal strength `a_g`, the sample value is
/// `e^{a(U_1 + a)} / (e^{a(U_1 + a)} + Σ_{j≥2} e^{a U_j})`
/// over a fresh set of `m` i.i.d. standard normals, combined as
/// `Σ_g weight_g · term_g`. Samples are drawn in fixed-size chunks with
/// per-chunk derived seeds, so the estimate does not depend on thread count.
fn mc_weighted_success(
    groups: &[(f64, f64)],
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, AnalysisError> {
    if samples == 0 {
        return Err(AnalysisError::NoSamples);
    }
    const CHUNK: usize = 2048;
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, c as u64));
            let count = CHUNK.min(samples - c * CHUNK);
            let mut u = vec![0.0f64; m];
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                for v in u.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let mut value = 0.0;
                for &(a, weight) in groups {
                    let x1 = a * (u[0] + a);
                    let mut mx = x1;
                    for &uj in &u[1..] {
                        mx = mx.max(a * uj);
                    }
                    let num = (x1 - mx).exp();
                    let mut denom = num;
                    for &uj in &u[1..] {
                        denom += (a * uj - mx).exp();
                    }
                    value += weight * num / denom;
                }
                sum += value;
                sumsq += value * value;
            }
            (sum, sumsq)
        })
        .collect();
    let (sum, sumsq) = partials
        .iter()
        .fold((0.0, 0.0), |(s, q), &(ps, pq)| (s + ps, q + pq));
    let nf = samples as f64;
    let mean = sum / nf;
    let var = if samples > 1 {
        ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        value: mean,
        std_err: (var / nf).sqrt(),
    })
}

pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 step over the combined inputs
    let mut z = seed ^ stream.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Monte-Carlo estimate of `x(τ)`: the exact `L`-term expectation with
/// power weights `P_ℓ/P`.
pub fn se_x_montecarlo(
    tau: f64,
    pa: &PowerAllocation,
    n: usize,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, AnalysisError> {
    let p_total = pa.total();
    let groups: Vec<(f64, f64)> = power_groups(pa)
        .into_iter()
        .map(|(p, count)| ((n as f64 * p).sqrt() / tau, p * count as f64 / p_total))
        .collect();
    mc_weighted_success(&groups, m, samples, seed)
}

/// Monte-Carlo evaluation of the SE section-error prediction at a given
/// `τ_T`: one minus the uniformly weighted section-success expectation.
pub fn predict_se_esec(
    tau_t: f64,
    pa: &PowerAllocation,
    n: usize,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, AnalysisError> {
    let l = pa.len() as f64;
    let groups: Vec<(f64, f64)> = power_groups(pa)
        .into_iter()
        .map(|(p, count)| ((n as f64 * p).sqrt() / tau_t, count as f64 / l))
        .collect();
    let success = mc_weighted_success(&groups, m, samples, seed)?;
    Ok(McEstimate {
        value: 1.0 - success.value,
        std_err: success.std_err,
    })
}

/// Runs the SE recursion until the change in `τ²` falls below `tol` or
/// `max_t` steps.
///
/// `converged` reports whether the final `τ²` reached the channel noise
/// floor, `τ²_T ≤ σ²·(1 + tol)`; a recursion that stalls above the floor
/// terminates with `converged = false`.
pub fn se_trajectory(
    pa: &PowerAllocation,
    params: &CodeParams,
    mode: SeMode,
    tol: f64,
    max_t: usize,
) -> SeTrajectory {
    let sigma2 = params.sigma2;
    let p_total = pa.total();
    let x_of = |tau2: f64, step: usize| -> f64 {
        match mode {
            SeMode::Asymptotic => se_x_asymptotic(tau2, pa, params.rate),
            SeMode::MonteCarlo { samples, seed } => se_x_montecarlo(
                tau2.sqrt(),
                pa,
                params.n,
                params.m,
                samples,
                mix_seed(seed, step as u64),
            )
            .map(|e| e.value)
            .unwrap_or(0.0),
        }
    };
    let mut tau2 = vec![sigma2 + p_total];
    let mut x = Vec::new();
    for t in 0..max_t {
        let current = *tau2.last().unwrap();
        let xt = x_of(current, t);
        x.push(xt);
        let next = sigma2 + p_total * (1.0 - xt);
        let stalled = (next - current).abs() < tol;
        tau2.push(next);
        if stalled {
            break;
        }
    }
    x.push(x_of(*tau2.last().unwrap(), tau2.len()));
    let converged = *tau2.last().unwrap() <= sigma2 * (1.0 + tol);
    SeTrajectory { tau2, x, converged }
}

/// Closed-form section and codeword error estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPrediction {
    pub esec: f64,
    pub ecw: f64,
    pub per_section: Vec<f64>,
}

/// Closed-form error prediction at the SE fixed point `τ_T = σ`.
///
/// Per section, `P_err,ℓ = 1 − E_U[Φ(sqrt(n·P_ℓ)/σ + U)^{M−1}]` with a single
/// standard normal `U`, evaluated by `quad_points`-node Gauss–Hermite
/// quadrature; `Φ^{M−1}` is computed in log space so large `M` cannot
/// underflow. The section estimate is the mean of `P_err,ℓ` and the codeword
/// estimate is `1 − Π(1 − P_err,ℓ)`.
pub fn predict_esec_closed(
    pa: &PowerAllocation,
    sigma: f64,
    n: usize,
    m: usize,
    quad_points: usize,
) -> Result<ErrorPrediction, AnalysisError> {
    if !(sigma > 0.0) {
        return Err(AnalysisError::BadSigma(sigma));
    }
    let (nodes, weights) = gauss_hermite(quad_points)?;
    let exponent = (m - 1) as f64;
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    let groups = power_groups(pa);
    let mut per_section = Vec::with_capacity(pa.len());
    let mut log_success_sum = 0.0;
    let mut esec_sum = 0.0;
    for (p_ell, count) in groups {
        let a = (n as f64 * p_ell).sqrt() / sigma;
        let mut p_err = 0.0;
        for (&x, &w) in nodes.iter().zip(&weights) {
            let ln_phi = ln_normal_cdf(a + SQRT_2 * x);
            p_err += w * -f64::exp_m1(exponent * ln_phi);
        }
        p_err = (p_err * inv_sqrt_pi).clamp(0.0, 1.0);
        esec_sum += p_err * count as f64;
        log_success_sum += f64::ln_1p(-p_err) * count as f64;
        per_section.extend(std::iter::repeat(p_err).take(count));
    }
    Ok(ErrorPrediction {
        esec: esec_sum / pa.len() as f64,
        ecw: (-f64::exp_m1(log_success_sum)).clamp(0.0, 1.0),
        per_section,
    })
}

/// `ln Φ(x)` for the standard normal CDF, accurate into the deep left tail.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x < -37.0 {
        // tail expansion: Φ(x) ≈ φ(x)/(-x) · (1 − 1/x² + 3/x⁴)
        let x2 = x * x;
        -0.5 * x2 - 0.5 * (2.0 * PI).ln() - (-x).ln() + f64::ln_1p(-1.0 / x2 + 3.0 / (x2 * x2))
    } else {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    }
}

/// Nodes and weights for `∫ f(x)·e^{−x²} dx ≈ Σ w_i·f(x_i)`.
///
/// `E[f(U)]` for standard normal `U` is then `(1/√π)·Σ w_i·f(√2·x_i)`.
///
/// Computed with the Golub–Welsch method: the nodes are the eigenvalues of
/// the Jacobi matrix (off-diagonal `sqrt(k/2)`), found by the implicit-QL
/// iteration which also carries the first eigenvector components that give
/// the weights.
pub fn gauss_hermite(points: usize) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    if points == 0 {
        return Err(AnalysisError::NoQuadPoints);
    }
    let n = points;
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    e.push(0.0);
    let mut q = vec![0.0f64; n];
    q[0] = 1.0;

    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 50 {
                return Err(AnalysisError::QuadratureNoConvergence { points });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = q[i + 1];
                q[i + 1] = s * q[i] + c * f;
                q[i] = c * q[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let nodes: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let weights: Vec<f64> = order.iter().map(|&i| PI.sqrt() * q[i] * q[i]).collect();
    Ok((nodes, weights))
}
