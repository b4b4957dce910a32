//! Seeded generation of small regular LDPC codes for tests and demos.

use super::ldpc::{LdpcCode, ParityCheckMatrix};
use super::OuterError;
use crate::analysis::mix_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generates an `n_rows × n_cols` matrix with `col_weight` ones per column,
/// retrying derived seeds until no row is empty.
pub fn generate_regular(
    n_cols: usize,
    n_rows: usize,
    col_weight: usize,
    seed: u64,
) -> Result<ParityCheckMatrix, OuterError> {
    if n_cols == 0 || n_rows == 0 || col_weight == 0 || col_weight > n_rows {
        return Err(OuterError::BadGeneratorShape {
            n_cols,
            n_rows,
            col_weight,
        });
    }
    for attempt in 0..64u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, attempt));
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n_rows];
        for c in 0..n_cols {
            for r in rand::seq::index::sample(&mut rng, n_rows, col_weight) {
                rows[r].push(c as u32);
            }
        }
        if rows.iter().all(|r| !r.is_empty()) {
            return ParityCheckMatrix::new(n_cols, rows);
        }
    }
    Err(OuterError::GeneratorFailed {
        n_cols,
        n_rows,
        col_weight,
    })
}

/// Like [`generate_regular`], but retries until the matrix also admits a
/// systematic encoder (full row rank).
pub fn generate_systematic(
    n_cols: usize,
    n_rows: usize,
    col_weight: usize,
    seed: u64,
) -> Result<LdpcCode, OuterError> {
    for attempt in 0..64u64 {
        let h = generate_regular(n_cols, n_rows, col_weight, mix_seed(seed, 1000 + attempt))?;
        if let Ok(code) = LdpcCode::systematic(&h) {
            return Ok(code);
        }
    }
    Err(OuterError::GeneratorFailed {
        n_cols,
        n_rows,
        col_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_has_requested_shape() {
        let h = generate_regular(20, 10, 3, 1).unwrap();
        assert_eq!(h.n_cols(), 20);
        assert_eq!(h.n_rows(), 10);
        let edges: usize = h.rows().iter().map(Vec::len).sum();
        assert_eq!(edges, 60);
        // deterministic per seed
        assert_eq!(h, generate_regular(20, 10, 3, 1).unwrap());
        assert_ne!(h, generate_regular(20, 10, 3, 2).unwrap());
    }

    #[test]
    fn rejects_impossible_shapes() {
        assert!(generate_regular(0, 10, 3, 1).is_err());
        assert!(generate_regular(10, 4, 5, 1).is_err());
    }
}
