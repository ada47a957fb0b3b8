//! Distance matrix files.
//!
//! Binary layout (little-endian): 8-byte magic, `n` as `u64`, then the strictly
//! lower triangle in row-major order (`(1,0), (2,0), (2,1), ...`) as `f64`.

use std::io::{BufRead, BufReader, Read, Write};

use super::DistanceMatrix;
use crate::error::DistanceError;
use crate::scalar::Scalar;

pub const MATRIX_MAGIC: &[u8; 8] = b"CBRSDMAT";

pub fn write_binary<T: Scalar, W: Write>(dm: &DistanceMatrix<T>, mut w: W) -> Result<(), DistanceError> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(dm.n() as u64).to_le_bytes())?;
    for i in 1..dm.n() {
        for j in 0..i {
            w.write_all(&dm.get(i, j).to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<T: Scalar, R: Read>(mut r: R) -> Result<DistanceMatrix<T>, DistanceError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| DistanceError::BadFile("truncated header".into()))?;
    if &magic != MATRIX_MAGIC {
        return Err(DistanceError::BadFile("bad magic".into()));
    }
    let mut nbuf = [0u8; 8];
    r.read_exact(&mut nbuf)
        .map_err(|_| DistanceError::BadFile("truncated header".into()))?;
    let n = usize::try_from(u64::from_le_bytes(nbuf))
        .map_err(|_| DistanceError::BadFile("n does not fit in memory".into()))?;
    let count = n
        .checked_mul(n.saturating_sub(1))
        .map(|c| c / 2)
        .ok_or_else(|| DistanceError::BadFile("n too large".into()))?;

    let mut lower = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| DistanceError::BadFile("truncated body".into()))?;
        lower.push(T::lit(f64::from_le_bytes(buf)));
    }
    if r.read(&mut buf)? != 0 {
        return Err(DistanceError::BadFile("trailing bytes".into()));
    }
    // Lower row-major (i, j<i) -> upper row-major (j, i>j).
    let mut upper = Vec::with_capacity(count);
    for j in 0..n {
        for i in (j + 1)..n {
            upper.push(lower[i * (i - 1) / 2 + j]);
        }
    }
    DistanceMatrix::from_upper(n, &upper)
}

/// Full `n x n` matrix, one comma-separated row per line.
pub fn write_csv<T: Scalar, W: Write>(dm: &DistanceMatrix<T>, mut w: W) -> Result<(), DistanceError> {
    for i in 0..dm.n() {
        let row: Vec<String> = dm.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: Scalar, R: Read>(r: R) -> Result<DistanceMatrix<T>, DistanceError> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (ln, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<T>()
                    .map_err(|_| DistanceError::BadFile(format!("line {}: bad value {t:?}", ln + 1)))
            })
            .collect::<Result<Vec<T>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(DistanceError::BadFile("matrix is not square".into()));
    }
    let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        if rows[i][i] != T::zero() {
            return Err(DistanceError::BadFile(format!("non-zero diagonal at {i}")));
        }
        for j in (i + 1)..n {
            if rows[i][j] != rows[j][i] {
                return Err(DistanceError::BadFile(format!("asymmetric at ({i}, {j})")));
            }
            upper.push(rows[i][j]);
        }
    }
    DistanceMatrix::from_upper(n, &upper)
}
