//! Design operators: the `n × ML` matrix `A` as a forward/adjoint pair.
//!
//! Two realizations are provided. The dense Gaussian operator materializes
//! i.i.d. `N(0, 1/n)` entries and is meant for small instances and test
//! oracles. The fast Hadamard operator implicitly represents
//! `A = (1/sqrt(n)) · S · H_N · D`, where `H_N` is the `N×N` Walsh–Hadamard
//! matrix applied with a fast transform, `D` is a seeded random `±1`
//! diagonal, and `S` selects `n` distinct random rows excluding the all-ones
//! row. Its columns have unit norm exactly and products cost `O(N·log N)`.
//!
//! Both kinds are fully determined by `(n, L, M, seed)` and are immutable
//! after construction: forward/adjoint allocate per-call scratch, so one
//! operator can serve many decoder instances concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("dimensions n = {n}, columns = {cols} overflow the address space")]
    DimensionOverflow { n: usize, cols: usize },
    #[error("n must be at least 1")]
    BadCodeLength,
    #[error("L and M must be at least 1")]
    BadSectionShape,
    #[error("expected a vector of length {expected} for {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Which matrix ensemble to draw the operator from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    DenseGaussian,
    FastHadamard,
}

/// A seeded design matrix exposing `A·β` and `Aᵀ·z`.
#[derive(Debug, Clone)]
pub enum DesignOperator {
    Dense(DenseGaussian),
    Hadamard(FastHadamard),
}

impl DesignOperator {
    pub fn new(
        kind: OperatorKind,
        n: usize,
        l: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self, DesignError> {
        if n == 0 {
            return Err(DesignError::BadCodeLength);
        }
        if l == 0 || m == 0 {
            return Err(DesignError::BadSectionShape);
        }
        let cols = l
            .checked_mul(m)
            .ok_or(DesignError::DimensionOverflow { n, cols: usize::MAX })?;
        match kind {
            OperatorKind::DenseGaussian => Ok(Self::Dense(DenseGaussian::new(n, cols, seed)?)),
            OperatorKind::FastHadamard => Ok(Self::Hadamard(FastHadamard::new(n, cols, seed)?)),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            Self::Dense(_) => OperatorKind::DenseGaussian,
            Self::Hadamard(_) => OperatorKind::FastHadamard,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Dense(op) => op.n,
            Self::Hadamard(op) => op.n,
        }
    }

    /// Number of columns, `M·L`.
    pub fn columns(&self) -> usize {
        match self {
            Self::Dense(op) => op.cols,
            Self::Hadamard(op) => op.cols,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Dense(op) => op.seed,
            Self::Hadamard(op) => op.seed,
        }
    }

    /// `A·β`, mapping length-`ML` vectors to length-`n` vectors.
    pub fn forward(&self, beta: &[f64]) -> Result<Vec<f64>, DesignError> {
        if beta.len() != self.columns() {
            return Err(DesignError::DimensionMismatch {
                what: "forward input",
                expected: self.columns(),
                got: beta.len(),
            });
        }
        Ok(match self {
            Self::Dense(op) => op.forward(beta),
            Self::Hadamard(op) => op.forward(beta),
        })
    }

    /// `Aᵀ·z`, the exact transpose of [`forward`](Self::forward).
    pub fn adjoint(&self, z: &[f64]) -> Result<Vec<f64>, DesignError> {
        if z.len() != self.n() {
            return Err(DesignError::DimensionMismatch {
                what: "adjoint input",
                expected: self.n(),
                got: z.len(),
            });
        }
        Ok(match self {
            Self::Dense(op) => op.adjoint(z),
            Self::Hadamard(op) => op.adjoint(z),
        })
    }
}

/// Materialized i.i.d. `N(0, 1/n)` matrix, row-major.
#[derive(Debug, Clone)]
pub struct DenseGaussian {
    n: usize,
    cols: usize,
    seed: u64,
    entries: Vec<f64>,
}

impl DenseGaussian {
    fn new(n: usize, cols: usize, seed: u64) -> Result<Self, DesignError> {
        let len = n
            .checked_mul(cols)
            .ok_or(DesignError::DimensionOverflow { n, cols })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("valid std dev");
        let entries = (0..len).map(|_| dist.sample(&mut rng)).collect();
        Ok(DenseGaussian {
            n,
            cols,
            seed,
            entries,
        })
    }

    fn forward(&self, beta: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.cols)
            .map(|row| dot(row, beta))
            .collect()
    }

    fn adjoint(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &zi) in self.entries.chunks_exact(self.cols).zip(z) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += zi * a;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Implicit `(1/sqrt(n))·S·H_N·D` operator.
#[derive(Debug, Clone)]
pub struct FastHadamard {
    n: usize,
    cols: usize,
    seed: u64,
    transform_size: usize,
    /// `±1` diagonal restricted to the first `cols` coordinates.
    signs: Vec<f64>,
    /// Selected Hadamard rows, distinct and never row 0.
    rows: Vec<u32>,
    inv_sqrt_n: f64,
}

impl FastHadamard {
    fn new(n: usize, cols: usize, seed: u64) -> Result<Self, DesignError> {
        let min_size = cols.max(n + 1);
        if min_size > (1usize << 31) {
            return Err(DesignError::DimensionOverflow { n, cols });
        }
        let transform_size = min_size.next_power_of_two();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = (0..cols)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        // Row 0 of H is all ones; sampling from 1..size keeps columns
        // zero-mean across the selection.
        let rows = rand::seq::index::sample(&mut rng, transform_size - 1, n)
            .iter()
            .map(|i| (i + 1) as u32)
            .collect();
        Ok(FastHadamard {
            n,
            cols,
            seed,
            transform_size,
            signs,
            rows,
            inv_sqrt_n: 1.0 / (n as f64).sqrt(),
        })
    }

    fn forward(&self, beta: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; self.transform_size];
        for ((b, &x), &s) in buf.iter_mut().zip(beta).zip(&self.signs) {
            *b = x * s;
        }
        fwht(&mut buf);
        self.rows
            .iter()
            .map(|&r| buf[r as usize] * self.inv_sqrt_n)
            .collect()
    }

    fn adjoint(&self, z: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; self.transform_size];
        for (&r, &zi) in self.rows.iter().zip(z) {
            buf[r as usize] = zi;
        }
        fwht(&mut buf);
        buf.iter()
            .zip(&self.signs)
            .map(|(&v, &s)| v * s * self.inv_sqrt_n)
            .collect()
    }
}

/// In-place Walsh–Hadamard transform (Sylvester ordering, unnormalized).
///
/// `data.len()` must be a power of two. The transform is its own transpose.
pub fn fwht(data: &mut [f64]) {
    debug_assert!(data.len().is_power_of_two());
    let n = data.len();
    let mut h = 1;
    while h < n {
        for chunk in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = chunk.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi) {
                let x = *a;
                let y = *b;
                *a = x + y;
                *b = x - y;
            }
        }
        h <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn probe(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn materialize(op: &DesignOperator) -> Vec<Vec<f64>> {
        // columns via forward on unit vectors
        let mut cols = Vec::with_capacity(op.columns());
        for j in 0..op.columns() {
            let mut e = vec![0.0; op.columns()];
            e[j] = 1.0;
            cols.push(op.forward(&e).unwrap());
        }
        cols
    }

    #[test]
    fn fwht_matches_naive() {
        let mut data = probe(16, 3);
        let naive: Vec<f64> = (0..16)
            .map(|i| {
                (0..16)
                    .map(|j| {
                        let sign = if ((i & j) as u32).count_ones() % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        };
                        sign * data[j]
                    })
                    .sum()
            })
            .collect();
        fwht(&mut data);
        for (a, b) in data.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn operators_are_deterministic() {
        for kind in [OperatorKind::DenseGaussian, OperatorKind::FastHadamard] {
            let a = DesignOperator::new(kind, 12, 4, 8, 99).unwrap();
            let b = DesignOperator::new(kind, 12, 4, 8, 99).unwrap();
            let x = probe(32, 7);
            assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
            let c = DesignOperator::new(kind, 12, 4, 8, 100).unwrap();
            assert_ne!(a.forward(&x).unwrap(), c.forward(&x).unwrap());
        }
    }

    #[test]
    fn forward_is_linear_and_zero_maps_to_zero() {
        for kind in [OperatorKind::DenseGaussian, OperatorKind::FastHadamard] {
            let op = DesignOperator::new(kind, 16, 4, 8, 5).unwrap();
            assert!(op.forward(&vec![0.0; 32]).unwrap().iter().all(|&v| v == 0.0));
            assert!(op.adjoint(&vec![0.0; 16]).unwrap().iter().all(|&v| v == 0.0));
            let u = probe(32, 1);
            let v = probe(32, 2);
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let fu = op.forward(&u).unwrap();
            let fv = op.forward(&v).unwrap();
            let fsum = op.forward(&sum).unwrap();
            for i in 0..16 {
                assert!((fsum[i] - fu[i] - fv[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transpose_identity() {
        for kind in [OperatorKind::DenseGaussian, OperatorKind::FastHadamard] {
            let op = DesignOperator::new(kind, 24, 8, 8, 11).unwrap();
            for trial in 0..20 {
                let u = probe(64, 1000 + trial);
                let v = probe(24, 2000 + trial);
                let lhs = dot(&op.forward(&u).unwrap(), &v);
                let rhs = dot(&u, &op.adjoint(&v).unwrap());
                let scale = lhs.abs().max(rhs.abs()).max(1e-30);
                assert!((lhs - rhs).abs() / scale < 1e-10);
            }
        }
    }

    #[test]
    fn hadamard_matches_dense_materialization() {
        let op = DesignOperator::new(OperatorKind::FastHadamard, 16, 4, 8, 42).unwrap();
        let cols = materialize(&op);
        let inv = 1.0 / 16f64.sqrt();
        for col in &cols {
            for &e in col {
                assert!((e.abs() - inv).abs() < 1e-12, "entries must be ±1/sqrt(n)");
            }
            let norm2: f64 = col.iter().map(|v| v * v).sum();
            assert!((norm2 - 1.0).abs() < 1e-12);
        }
        let beta = probe(32, 8);
        let fast = op.forward(&beta).unwrap();
        for i in 0..16 {
            let slow: f64 = (0..32).map(|j| cols[j][i] * beta[j]).sum();
            assert!((fast[i] - slow).abs() < 1e-10);
        }
        let z = probe(16, 9);
        let fast_adj = op.adjoint(&z).unwrap();
        for j in 0..32 {
            let slow: f64 = (0..16).map(|i| cols[j][i] * z[i]).sum();
            assert!((fast_adj[j] - slow).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_column_norms_concentrate() {
        let op = DesignOperator::new(OperatorKind::DenseGaussian, 4096, 2, 16, 7).unwrap();
        let cols = materialize(&op);
        let mean: f64 = cols
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / cols.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean column norm² = {mean}");
    }

    #[test]
    fn dimension_errors() {
        let op = DesignOperator::new(OperatorKind::FastHadamard, 8, 2, 4, 0).unwrap();
        assert!(op.forward(&vec![0.0; 7]).is_err());
        assert!(op.adjoint(&vec![0.0; 9]).is_err());
        assert!(DesignOperator::new(OperatorKind::FastHadamard, 0, 2, 4, 0).is_err());
    }
}
