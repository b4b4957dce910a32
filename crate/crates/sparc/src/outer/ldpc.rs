//! Sparse binary parity-check matrices, systematic encoding, and min-sum
//! decoding.

use super::OuterError;

/// Default scaling factor of the normalized min-sum check update.
pub const MINSUM_SCALE: f64 = 0.75;

/// A sparse binary parity-check matrix with `n_rows` checks on `n_cols`
/// bits. Every row and every column carries at least one edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n_cols: usize,
    rows: Vec<Vec<u32>>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from per-check column indices. Indices are sorted and
    /// deduplicated; empty rows or columns are rejected.
    pub fn new(n_cols: usize, rows: Vec<Vec<u32>>) -> Result<Self, OuterError> {
        if n_cols == 0 || rows.is_empty() {
            return Err(OuterError::EmptyMatrix);
        }
        let mut rows = rows;
        let mut col_seen = vec![false; n_cols];
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                return Err(OuterError::EmptyRow { row: r });
            }
            for &c in row.iter() {
                if c as usize >= n_cols {
                    return Err(OuterError::ColumnOutOfRange {
                        row: r,
                        col: c as usize,
                        n_cols,
                    });
                }
                col_seen[c as usize] = true;
            }
        }
        if let Some(col) = col_seen.iter().position(|&s| !s) {
            return Err(OuterError::EmptyColumn { col });
        }
        Ok(ParityCheckMatrix { n_cols, rows })
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// True when `H·bits = 0` over GF(2).
    pub fn syndrome_ok(&self, bits: &[bool]) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().fold(false, |p, &c| p ^ bits[c as usize]) == false)
    }
}

const WORD: usize = 64;

fn bit_get(row: &[u64], i: usize) -> bool {
    row[i / WORD] >> (i % WORD) & 1 == 1
}

fn bit_set(row: &mut [u64], i: usize) {
    row[i / WORD] |= 1 << (i % WORD);
}

fn xor_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// A parity-check matrix together with a systematic encoder derived from it.
///
/// Encoding places the `k` user bits first and solves `H·c = 0` for the
/// trailing parity bits. When the trailing columns of the loaded matrix are
/// singular, columns are permuted until they are not; the permutation is
/// recorded and [`h`](Self::h) returns the permuted matrix, so encoder and
/// decoder stay consistent.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    h: ParityCheckMatrix,
    k: usize,
    /// `col_perm[new_position] = original_column`.
    col_perm: Vec<usize>,
    /// Row `i` holds the user-bit mask producing parity bit `i`.
    parity_gen: Vec<Vec<u64>>,
}

impl LdpcCode {
    /// Derives the systematic form of `h` by GF(2) elimination on the
    /// trailing `n − k` columns, swapping in other columns when necessary.
    pub fn systematic(h: &ParityCheckMatrix) -> Result<Self, OuterError> {
        let n = h.n_cols();
        let r = h.n_rows();
        if r >= n {
            return Err(OuterError::NotACode {
                n_cols: n,
                n_rows: r,
            });
        }
        let k = n - r;
        let words = n.div_ceil(WORD);
        let mut dense: Vec<Vec<u64>> = h
            .rows()
            .iter()
            .map(|row| {
                let mut bits = vec![0u64; words];
                for &c in row {
                    bit_set(&mut bits, c as usize);
                }
                bits
            })
            .collect();
        let mut col_perm: Vec<usize> = (0..n).collect();

        for j in 0..r {
            let target = k + j;
            let pivot = match (j..r).find(|&i| bit_get(&dense[i], target)) {
                Some(i) => i,
                None => {
                    // swap in a column that has a one in the remaining rows;
                    // later parity columns first, user columns as a fallback
                    let candidates = (target + 1..n).chain(0..k);
                    let mut found = None;
                    'search: for c in candidates {
                        for i in j..r {
                            if bit_get(&dense[i], c) {
                                found = Some((c, i));
                                break 'search;
                            }
                        }
                    }
                    let (c, i) = found.ok_or(OuterError::RankDeficient)?;
                    for row in dense.iter_mut() {
                        let a = bit_get(row, c);
                        let b = bit_get(row, target);
                        if a != b {
                            row[c / WORD] ^= 1 << (c % WORD);
                            row[target / WORD] ^= 1 << (target % WORD);
                        }
                    }
                    col_perm.swap(c, target);
                    i
                }
            };
            dense.swap(j, pivot);
            let pivot_row = dense[j].clone();
            for (i, row) in dense.iter_mut().enumerate() {
                if i != j && bit_get(row, target) {
                    xor_into(row, &pivot_row);
                }
            }
        }

        let permuted = if col_perm.iter().enumerate().all(|(i, &c)| i == c) {
            h.clone()
        } else {
            let mut inv = vec![0usize; n];
            for (new, &orig) in col_perm.iter().enumerate() {
                inv[orig] = new;
            }
            let rows = h
                .rows()
                .iter()
                .map(|row| row.iter().map(|&c| inv[c as usize] as u32).collect())
                .collect();
            ParityCheckMatrix::new(n, rows)?
        };

        let gen_words = k.div_ceil(WORD);
        let parity_gen = dense
            .iter()
            .map(|row| row[..gen_words].to_vec())
            .map(|mut bits| {
                // mask tail bits beyond k
                if k % WORD != 0 {
                    let keep = (1u64 << (k % WORD)) - 1;
                    if let Some(lastw) = bits.last_mut() {
                        *lastw &= keep;
                    }
                }
                bits
            })
            .collect();

        Ok(LdpcCode {
            h: permuted,
            k,
            col_perm,
            parity_gen,
        })
    }

    /// The (possibly column-permuted) parity-check matrix this code encodes
    /// and decodes against.
    pub fn h(&self) -> &ParityCheckMatrix {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.n_cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Mapping from current column position to the column of the matrix the
    /// code was built from; identity unless preprocessing had to permute.
    pub fn col_permutation(&self) -> &[usize] {
        &self.col_perm
    }

    pub fn is_permuted(&self) -> bool {
        self.col_perm.iter().enumerate().any(|(i, &c)| i != c)
    }

    /// Systematic encode: the codeword starts with `user` verbatim and
    /// satisfies `H·c = 0`.
    pub fn encode(&self, user: &[bool]) -> Result<Vec<bool>, OuterError> {
        if user.len() != self.k {
            return Err(OuterError::UserBitCount {
                expected: self.k,
                got: user.len(),
            });
        }
        let words = self.k.div_ceil(WORD);
        let mut u = vec![0u64; words];
        for (i, &b) in user.iter().enumerate() {
            if b {
                bit_set(&mut u, i);
            }
        }
        let mut cw = Vec::with_capacity(self.n());
        cw.extend_from_slice(user);
        for gen in &self.parity_gen {
            let ones: u32 = gen.iter().zip(&u).map(|(g, w)| (g & w).count_ones()).sum();
            cw.push(ones % 2 == 1);
        }
        Ok(cw)
    }
}

/// Min-sum decode with the default normalization factor.
///
/// LLR convention: `llr = ln(p(0)/p(1))`, positive means bit 0 is more
/// likely. Returns the hard decision and whether it satisfies every check;
/// the decoder exits as soon as a valid codeword appears and never reports
/// `valid` for a word with a non-zero syndrome.
pub fn minsum_decode(
    h: &ParityCheckMatrix,
    llrs: &[f64],
    max_iters: usize,
) -> Result<(Vec<bool>, bool), OuterError> {
    minsum_decode_scaled(h, llrs, max_iters, MINSUM_SCALE)
}

/// Min-sum decode with an explicit check-message scaling factor
/// (`scale = 1` gives plain min-sum).
pub fn minsum_decode_scaled(
    h: &ParityCheckMatrix,
    llrs: &[f64],
    max_iters: usize,
    scale: f64,
) -> Result<(Vec<bool>, bool), OuterError> {
    if llrs.len() != h.n_cols() {
        return Err(OuterError::LlrCount {
            expected: h.n_cols(),
            got: llrs.len(),
        });
    }
    if let Some(i) = llrs.iter().position(|v| !v.is_finite()) {
        return Err(OuterError::NonFiniteLlr { index: i });
    }

    // CSR over check-node edges
    let mut check_start = Vec::with_capacity(h.n_rows() + 1);
    check_start.push(0usize);
    for row in h.rows() {
        check_start.push(check_start.last().unwrap() + row.len());
    }
    let edge_var: Vec<u32> = h.rows().iter().flatten().copied().collect();
    let n_edges = edge_var.len();
    let mut var_edges: Vec<Vec<u32>> = vec![Vec::new(); h.n_cols()];
    for (e, &v) in edge_var.iter().enumerate() {
        var_edges[v as usize].push(e as u32);
    }

    let mut msg_vc: Vec<f64> = edge_var.iter().map(|&v| llrs[v as usize]).collect();
    let mut msg_cv = vec![0.0f64; n_edges];
    let mut posterior: Vec<f64> = llrs.to_vec();

    let hard = |post: &[f64]| -> Vec<bool> { post.iter().map(|&v| v < 0.0).collect() };

    let mut bits = hard(&posterior);
    if h.syndrome_ok(&bits) {
        return Ok((bits, true));
    }

    for _ in 0..max_iters {
        // check-node update: sign product and two smallest magnitudes
        for c in 0..h.n_rows() {
            let edges = check_start[c]..check_start[c + 1];
            let mut sign = 1.0f64;
            let mut min1 = f64::INFINITY;
            let mut min2 = f64::INFINITY;
            let mut argmin = usize::MAX;
            for e in edges.clone() {
                let v = msg_vc[e];
                if v < 0.0 {
                    sign = -sign;
                }
                let mag = v.abs();
                if mag < min1 {
                    min2 = min1;
                    min1 = mag;
                    argmin = e;
                } else if mag < min2 {
                    min2 = mag;
                }
            }
            for e in edges {
                let mag = if e == argmin { min2 } else { min1 };
                let s = if msg_vc[e] < 0.0 { -sign } else { sign };
                msg_cv[e] = scale * s * mag;
            }
        }
        // variable-node update
        for (v, edges) in var_edges.iter().enumerate() {
            let total: f64 = llrs[v] + edges.iter().map(|&e| msg_cv[e as usize]).sum::<f64>();
            posterior[v] = total;
            for &e in edges {
                msg_vc[e as usize] = total - msg_cv[e as usize];
            }
        }
        bits = hard(&posterior);
        if h.syndrome_ok(&bits) {
            return Ok((bits, true));
        }
    }
    Ok((bits, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repetition() -> ParityCheckMatrix {
        ParityCheckMatrix::new(2, vec![vec![0, 1]]).unwrap()
    }

    #[test]
    fn matrix_validation() {
        assert!(ParityCheckMatrix::new(0, vec![]).is_err());
        assert!(ParityCheckMatrix::new(3, vec![vec![]]).is_err());
        assert!(ParityCheckMatrix::new(3, vec![vec![0, 3]]).is_err());
        // column 2 empty
        assert!(ParityCheckMatrix::new(3, vec![vec![0, 1]]).is_err());
        let h = ParityCheckMatrix::new(3, vec![vec![0, 1, 1], vec![1, 2]]).unwrap();
        assert_eq!(h.rows()[0], vec![0, 1]); // deduplicated
    }

    #[test]
    fn syndrome_check() {
        let h = ParityCheckMatrix::new(3, vec![vec![0, 1, 2]]).unwrap();
        assert!(h.syndrome_ok(&[false, false, false]));
        assert!(h.syndrome_ok(&[true, true, false]));
        assert!(!h.syndrome_ok(&[true, false, false]));
    }

    #[test]
    fn systematic_repetition() {
        let code = LdpcCode::systematic(&repetition()).unwrap();
        assert_eq!(code.k(), 1);
        assert!(!code.is_permuted());
        assert_eq!(code.encode(&[false]).unwrap(), vec![false, false]);
        assert_eq!(code.encode(&[true]).unwrap(), vec![true, true]);
    }

    #[test]
    fn systematic_needs_permutation() {
        // parity solve on the last column alone is singular: H = [1 1 0; 1 0 1]
        // requires it? last 2 columns [[1 0],[0 1]] invertible actually; build
        // one where the last two columns are equal instead.
        let h = ParityCheckMatrix::new(4, vec![vec![0, 2, 3], vec![1, 2, 3]]).unwrap();
        // last two columns are both (1,1): singular, must permute
        let code = LdpcCode::systematic(&h).unwrap();
        assert!(code.is_permuted());
        for word in 0..4usize {
            let user = [word & 1 == 1, word >> 1 & 1 == 1];
            let cw = code.encode(&user).unwrap();
            assert_eq!(&cw[..2], &user);
            assert!(code.h().syndrome_ok(&cw));
        }
    }

    #[test]
    fn systematic_rejects_rank_deficient() {
        let h = ParityCheckMatrix::new(3, vec![vec![0, 1, 2], vec![0, 1, 2]]).unwrap();
        assert!(matches!(
            LdpcCode::systematic(&h),
            Err(OuterError::RankDeficient)
        ));
    }

    #[test]
    fn systematic_random_small_code() {
        let code = crate::outer::gen::generate_systematic(20, 10, 3, 7).unwrap();
        assert_eq!(code.n(), 20);
        assert_eq!(code.k(), 10);
        for seed in 0..10u32 {
            let user: Vec<bool> = (0..10).map(|i| (seed >> (i % 10)) & 1 == 1).collect();
            let cw = code.encode(&user).unwrap();
            assert_eq!(&cw[..10], &user[..]);
            assert!(code.h().syndrome_ok(&cw));
        }
    }

    #[test]
    fn minsum_strong_zero_llrs() {
        let h = ParityCheckMatrix::new(4, vec![vec![0, 1, 2], vec![1, 2, 3]]).unwrap();
        let (bits, valid) = minsum_decode(&h, &[9.0, 8.0, 7.0, 9.5], 10).unwrap();
        assert!(valid);
        assert!(bits.iter().all(|&b| !b));
    }

    #[test]
    fn minsum_repetition_majority() {
        // brute-force ML over {00, 11} picks 00 for llrs (+2, −1)
        let (bits, valid) = minsum_decode(&repetition(), &[2.0, -1.0], 10).unwrap();
        assert!(valid);
        assert_eq!(bits, vec![false, false]);
    }

    #[test]
    fn minsum_single_parity_erasure() {
        let h = ParityCheckMatrix::new(3, vec![vec![0, 1, 2]]).unwrap();
        // erased third bit resolves to even parity
        let (bits, valid) = minsum_decode(&h, &[20.0, 20.0, 0.0], 10).unwrap();
        assert!(valid);
        assert_eq!(bits, vec![false, false, false]);
        let (bits, valid) = minsum_decode(&h, &[20.0, -20.0, 0.0], 10).unwrap();
        assert!(valid);
        assert_eq!(bits, vec![false, true, true]);
    }

    #[test]
    fn minsum_never_claims_invalid_word_valid() {
        let h = ParityCheckMatrix::new(4, vec![vec![0, 1], vec![2, 3], vec![1, 2]]).unwrap();
        // zero iterations with a parity-violating input
        let (bits, valid) = minsum_decode(&h, &[5.0, -5.0, 5.0, 5.0], 0).unwrap();
        assert!(!valid);
        assert!(!h.syndrome_ok(&bits) || valid);
    }

    #[test]
    fn minsum_rejects_bad_llrs() {
        let h = repetition();
        assert!(minsum_decode(&h, &[1.0], 5).is_err());
        assert!(minsum_decode(&h, &[1.0, f64::NAN], 5).is_err());
        assert!(minsum_decode(&h, &[1.0, f64::INFINITY], 5).is_err());
    }
}
