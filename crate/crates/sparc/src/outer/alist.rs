//! The standard `alist` text format for sparse binary matrices.
//!
//! Layout: `n m` (columns, rows), maximum column/row weights, a list of
//! per-column weights, a list of per-row weights, then one adjacency line per
//! column and one per row with 1-based indices. Writers conventionally pad
//! adjacency lines with zeros up to the maximum weight; both padded and
//! unpadded lines are accepted, and the column and row lists are
//! cross-checked against each other.

use super::ldpc::ParityCheckMatrix;
use super::OuterError;
use std::path::Path;

fn parse_line<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    what: &'static str,
) -> Result<Vec<usize>, OuterError> {
    let line = lines.next().ok_or(OuterError::AlistTruncated { what })?;
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| OuterError::AlistToken { what })
        })
        .collect()
}

/// Parses alist text into a parity-check matrix.
pub fn parse_alist(text: &str) -> Result<ParityCheckMatrix, OuterError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());

    let header = parse_line(&mut lines, "size header")?;
    if header.len() != 2 {
        return Err(OuterError::AlistToken {
            what: "size header",
        });
    }
    let (n_cols, n_rows) = (header[0], header[1]);
    let _max_weights = parse_line(&mut lines, "max weights")?;
    let col_weights = parse_line(&mut lines, "column weights")?;
    let row_weights = parse_line(&mut lines, "row weights")?;
    if col_weights.len() != n_cols || row_weights.len() != n_rows {
        return Err(OuterError::AlistWeightCount { n_cols, n_rows });
    }

    let mut cols: Vec<Vec<u32>> = Vec::with_capacity(n_cols);
    for (c, &w) in col_weights.iter().enumerate() {
        let entries = parse_line(&mut lines, "column adjacency")?;
        let nz: Vec<u32> = entries
            .iter()
            .filter(|&&v| v != 0)
            .map(|&v| {
                if v > n_rows {
                    Err(OuterError::AlistIndexRange {
                        what: "column adjacency",
                        index: v,
                    })
                } else {
                    Ok((v - 1) as u32)
                }
            })
            .collect::<Result<_, _>>()?;
        if nz.len() != w {
            return Err(OuterError::AlistWeightMismatch {
                what: "column",
                index: c,
                expected: w,
                got: nz.len(),
            });
        }
        cols.push(nz);
    }

    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(n_rows);
    for (r, &w) in row_weights.iter().enumerate() {
        let entries = parse_line(&mut lines, "row adjacency")?;
        let nz: Vec<u32> = entries
            .iter()
            .filter(|&&v| v != 0)
            .map(|&v| {
                if v > n_cols {
                    Err(OuterError::AlistIndexRange {
                        what: "row adjacency",
                        index: v,
                    })
                } else {
                    Ok((v - 1) as u32)
                }
            })
            .collect::<Result<_, _>>()?;
        if nz.len() != w {
            return Err(OuterError::AlistWeightMismatch {
                what: "row",
                index: r,
                expected: w,
                got: nz.len(),
            });
        }
        rows.push(nz);
    }

    // the two adjacency lists must describe the same matrix
    let mut from_cols: Vec<Vec<u32>> = vec![Vec::new(); n_rows];
    for (c, col) in cols.iter().enumerate() {
        for &r in col {
            from_cols[r as usize].push(c as u32);
        }
    }
    for (row, mirror) in rows.iter_mut().zip(from_cols.iter_mut()) {
        row.sort_unstable();
        mirror.sort_unstable();
        if row != mirror {
            return Err(OuterError::AlistInconsistent);
        }
    }

    ParityCheckMatrix::new(n_cols, rows)
}

/// Serializes a matrix in canonical (zero-padded) alist form.
pub fn write_alist(h: &ParityCheckMatrix) -> String {
    let n_cols = h.n_cols();
    let n_rows = h.n_rows();
    let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n_cols];
    for (r, row) in h.rows().iter().enumerate() {
        for &c in row {
            cols[c as usize].push(r as u32);
        }
    }
    let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = h.rows().iter().map(Vec::len).max().unwrap_or(0);

    let mut out = String::new();
    out.push_str(&format!("{} {}\n", n_cols, n_rows));
    out.push_str(&format!("{} {}\n", max_col, max_row));
    let weights = |ws: Vec<usize>| {
        ws.iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    out.push_str(&weights(cols.iter().map(Vec::len).collect()));
    out.push('\n');
    out.push_str(&weights(h.rows().iter().map(Vec::len).collect()));
    out.push('\n');
    let adjacency = |list: &[u32], width: usize, out: &mut String| {
        let mut toks: Vec<String> = list.iter().map(|&i| (i + 1).to_string()).collect();
        toks.resize(width, "0".to_string());
        out.push_str(&toks.join(" "));
        out.push('\n');
    };
    for col in &cols {
        adjacency(col, max_col, &mut out);
    }
    for row in h.rows() {
        adjacency(row, max_row, &mut out);
    }
    out
}

/// Reads a matrix from an alist file.
pub fn load_alist(path: &Path) -> Result<ParityCheckMatrix, OuterError> {
    let text = std::fs::read_to_string(path).map_err(|source| OuterError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_alist(&text)
}

/// Writes a matrix to an alist file.
pub fn save_alist(h: &ParityCheckMatrix, path: &Path) -> Result<(), OuterError> {
    std::fs::write(path, write_alist(h)).map_err(|source| OuterError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let h = ParityCheckMatrix::new(5, vec![vec![0, 1, 4], vec![1, 2, 3], vec![0, 3, 4]])
            .unwrap();
        let text = write_alist(&h);
        let parsed = parse_alist(&text).unwrap();
        assert_eq!(parsed, h);
    }

    #[test]
    fn parses_unpadded_lines() {
        // same matrix, adjacency lines without the zero padding
        let text = "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n2 3\n";
        let h = parse_alist(text).unwrap();
        assert_eq!(h.n_cols(), 3);
        assert_eq!(h.rows()[0], vec![0, 1]);
        assert_eq!(h.rows()[1], vec![1, 2]);
    }

    #[test]
    fn rejects_inconsistent_lists() {
        // row list disagrees with the column list
        let text = "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n1 3\n";
        assert!(matches!(
            parse_alist(text),
            Err(OuterError::AlistInconsistent)
        ));
    }

    #[test]
    fn rejects_truncated_and_garbage() {
        assert!(parse_alist("3 2\n2 2\n1 2 1\n").is_err());
        assert!(parse_alist("3 x\n").is_err());
        assert!(parse_alist("").is_err());
    }

    #[test]
    fn generated_code_round_trips_through_files() {
        let h = crate::outer::gen::generate_regular(24, 12, 3, 3).unwrap();
        let dir = std::env::temp_dir().join(format!("sparc-alist-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("test.alist");
        save_alist(&h, &path).unwrap();
        let back = load_alist(&path).unwrap();
        assert_eq!(back, h);
        std::fs::remove_dir_all(&dir).ok();
    }
}
