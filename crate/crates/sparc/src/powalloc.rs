//! Power allocation design.
//!
//! A power allocation assigns each of the `L` sections a share `P_ℓ` of the
//! average codeword power `P`, non-increasing in `ℓ` and summing to `P`. The
//! shape of the allocation determines the order in which sections become
//! decodable and is the main finite-length tuning knob of the code.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PaError {
    #[error("L must be at least 1")]
    BadSectionCount,
    #[error("total power must be positive, got {0}")]
    BadPower(f64),
    #[error("capacity must be positive, got {0}")]
    BadCapacity(f64),
    #[error("block count {b} must divide L = {l}")]
    BlockMismatch { l: usize, b: usize },
    #[error("noise variance must be non-negative, got {0}")]
    BadNoiseVariance(f64),
    #[error("design rate must be non-negative, got {0}")]
    BadDesignRate(f64),
    #[error("steepness a must be non-negative, got {0}")]
    BadSteepness(f64),
    #[error("flattening fraction f must lie in [0, 1], got {0}")]
    BadFlatteningFraction(f64),
}

/// Which constructor produced an allocation, with its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PaScheme {
    Flat,
    Exponential,
    ModifiedExponential { a: f64, f: f64 },
    Iterative { b: usize, r_pa: f64 },
}

/// Per-section power shares, non-increasing and summing to the total power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    p_ell: Vec<f64>,
    scheme: PaScheme,
}

/// Minimum per-section power `2·ln(2)·R·τ²/L` for a section to be decodable
/// at effective noise variance `τ²`.
pub fn min_required_power(tau2: f64, rate: f64, l: usize) -> f64 {
    2.0 * LN_2 * rate * tau2 / l as f64
}

/// Default design rate for the iterative allocation: `R` above rate 1, else 0
/// (a completely flat allocation works better at low rates).
pub fn default_r_pa(rate: f64) -> f64 {
    if rate > 1.0 {
        rate
    } else {
        0.0
    }
}

/// Candidate `R_PA` values around `R`, stepped by `0.02·R`, for empirical
/// tuning sweeps. Values are clamped to be non-negative.
pub fn r_pa_grid(rate: f64, steps_below: usize, steps_above: usize) -> Vec<f64> {
    let step = 0.02 * rate;
    let mut grid = Vec::with_capacity(steps_below + steps_above + 1);
    for k in (1..=steps_below).rev() {
        grid.push((rate - step * k as f64).max(0.0));
    }
    grid.push(rate);
    for k in 1..=steps_above {
        grid.push(rate + step * k as f64);
    }
    grid
}

impl PowerAllocation {
    /// `P_ℓ = P/L` for every section.
    pub fn flat(l: usize, p: f64) -> Result<Self, PaError> {
        check_l_p(l, p)?;
        Ok(PowerAllocation {
            p_ell: vec![p / l as f64; l],
            scheme: PaScheme::Flat,
        })
    }

    /// Exponentially decaying allocation
    /// `P_ℓ = P·(2^{2C/L} − 1)/(1 − 2^{−2C})·2^{−2Cℓ/L}`,
    /// which sums to `P` analytically.
    pub fn exponential(l: usize, p: f64, c: f64) -> Result<Self, PaError> {
        check_l_p(l, p)?;
        if !(c > 0.0) {
            return Err(PaError::BadCapacity(c));
        }
        let lf = l as f64;
        let front = p * (2f64.powf(2.0 * c / lf) - 1.0) / (1.0 - 2f64.powf(-2.0 * c));
        let p_ell = (1..=l)
            .map(|ell| front * 2f64.powf(-2.0 * c * ell as f64 / lf))
            .collect();
        Ok(PowerAllocation {
            p_ell,
            scheme: PaScheme::Exponential,
        })
    }

    /// Exponential decay with steepness `a`, flattened after the first
    /// fraction `f` of sections; the scale is normalized so the total is `P`.
    pub fn modified_exponential(
        l: usize,
        p: f64,
        c: f64,
        a: f64,
        f: f64,
    ) -> Result<Self, PaError> {
        check_l_p(l, p)?;
        if !(c > 0.0) {
            return Err(PaError::BadCapacity(c));
        }
        if !(a >= 0.0) {
            return Err(PaError::BadSteepness(a));
        }
        if !(0.0..=1.0).contains(&f) {
            return Err(PaError::BadFlatteningFraction(f));
        }
        let lf = l as f64;
        let cutoff = f * lf + 1e-9;
        let tail = 2f64.powf(-2.0 * a * c * f);
        let mut p_ell: Vec<f64> = (1..=l)
            .map(|ell| {
                if ell as f64 <= cutoff {
                    2f64.powf(-2.0 * a * c * ell as f64 / lf)
                } else {
                    tail
                }
            })
            .collect();
        let total: f64 = p_ell.iter().sum();
        let kappa = p / total;
        for v in &mut p_ell {
            *v *= kappa;
        }
        Ok(PowerAllocation {
            p_ell,
            scheme: PaScheme::ModifiedExponential { a, f },
        })
    }

    /// Iterative block allocation.
    ///
    /// The `L` sections are split into `B` blocks. Each block in turn receives
    /// the minimum decodable power `2·ln(2)·R_PA·τ²/L` at the current
    /// effective noise variance `τ² = σ² + P_remain`; as soon as an equal
    /// split of the remaining power over the remaining sections exceeds that
    /// minimum, the split is applied and the allocation ends flat. When the
    /// flattening branch never fires the raw total can drift from `P`, so the
    /// result is rescaled to sum to `P` exactly.
    ///
    /// `r_pa = 0` yields the flat allocation.
    pub fn iterative(l: usize, b: usize, sigma2: f64, p: f64, r_pa: f64) -> Result<Self, PaError> {
        check_l_p(l, p)?;
        if b == 0 || l % b != 0 {
            return Err(PaError::BlockMismatch { l, b });
        }
        if !(sigma2 >= 0.0) {
            return Err(PaError::BadNoiseVariance(sigma2));
        }
        if !(r_pa >= 0.0) {
            return Err(PaError::BadDesignRate(r_pa));
        }
        let k = l / b;
        let mut p_ell = vec![0.0; l];
        let mut allocated = 0.0;
        for blk in 0..b {
            let start = blk * k;
            let p_remain = p - allocated;
            let tau2 = sigma2 + p_remain;
            // A design rate far above capacity can drain more than σ² + P
            // in earlier blocks; leave the tail at zero rather than working
            // with a negative effective noise variance.
            if tau2 <= 0.0 {
                break;
            }
            let p_block = min_required_power(tau2, r_pa, l);
            let flat_level = p_remain / (l - start) as f64;
            if flat_level > p_block {
                for v in &mut p_ell[start..] {
                    *v = flat_level;
                }
                break;
            }
            for v in &mut p_ell[start..start + k] {
                *v = p_block;
            }
            allocated += p_block * k as f64;
        }
        // Restore Σ P_ℓ = P; a no-op up to rounding when flattening fired.
        let total: f64 = p_ell.iter().sum();
        let scale = p / total;
        for v in &mut p_ell {
            *v *= scale;
        }
        Ok(PowerAllocation {
            p_ell,
            scheme: PaScheme::Iterative { b, r_pa },
        })
    }

    pub fn per_section(&self) -> &[f64] {
        &self.p_ell
    }

    pub fn scheme(&self) -> PaScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.p_ell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_ell.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.p_ell.iter().sum()
    }

    /// Smallest section power `P_L`; the default early-stop threshold of the
    /// AMP decoder.
    pub fn min_section_power(&self) -> f64 {
        *self.p_ell.last().expect("allocation is non-empty")
    }

    /// Block index (0-based) where the flat tail begins: the first section
    /// whose power equals the final one, divided by the block size. For an
    /// allocation whose flatten branch never fired this is simply the last
    /// block.
    pub fn flattening_block(&self, b: usize) -> Option<usize> {
        let k = self.p_ell.len() / b;
        let last = self.min_section_power();
        let first_flat = self.p_ell.iter().position(|&v| v == last)?;
        Some(first_flat / k)
    }
}

fn check_l_p(l: usize, p: f64) -> Result<(), PaError> {
    if l == 0 {
        return Err(PaError::BadSectionCount);
    }
    if !(p > 0.0) {
        return Err(PaError::BadPower(p));
    }
    Ok(())
}
