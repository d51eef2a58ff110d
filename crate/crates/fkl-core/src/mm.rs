//! Matrix Market coordinate text for exact integer matrices.

use crate::error::{FklError, Result};
use num_bigint::BigInt;

pub fn write_coordinate(rows: usize, cols: usize, triplets: &[(usize, usize, BigInt)]) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate integer general\n");
    out.push_str(&format!("{} {} {}\n", rows, cols, triplets.len()));
    for (i, j, v) in triplets {
        // 1-based indices per the format
        out.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
    }
    out
}

pub fn parse_coordinate(text: &str) -> Result<(usize, usize, Vec<(usize, usize, BigInt)>)> {
    let bad = |msg: &str| FklError::InvalidArgument(format!("matrix market: {msg}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    let hl = header.to_ascii_lowercase();
    if !hl.starts_with("%%matrixmarket") || !hl.contains("coordinate") {
        return Err(bad("expected coordinate header"));
    }
    if hl.contains("complex") || hl.contains("pattern") {
        return Err(bad("only integer/real entries supported"));
    }
    let mut lines = lines.filter(|l| !l.trim_start().starts_with('%'));
    let size = lines.next().ok_or_else(|| bad("missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("size line not integral")))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(bad("size line needs rows cols nnz"));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(bad("entry line needs i j value"));
        }
        let i: usize = toks[0].parse().map_err(|_| bad("row index"))?;
        let j: usize = toks[1].parse().map_err(|_| bad("col index"))?;
        let v: BigInt = toks[2].parse().map_err(|_| bad("integer value"))?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(bad("index out of range"));
        }
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(bad("entry count disagrees with size line"));
    }
    Ok((rows, cols, triplets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let trips = vec![
            (0usize, 0usize, BigInt::from(-2)),
            (1, 0, BigInt::from(1)),
            (2, 2, BigInt::from(7)),
        ];
        let text = write_coordinate(3, 3, &trips);
        let (r, c, back) = parse_coordinate(&text).unwrap();
        assert_eq!((r, c), (3, 3));
        assert_eq!(back, trips);
    }

    #[test]
    fn rejects_bad_header_and_ranges() {
        assert!(parse_coordinate("plain text").is_err());
        let text = "%%MatrixMarket matrix coordinate integer general\n2 2 1\n3 1 5\n";
        assert!(parse_coordinate(text).is_err());
    }
}
