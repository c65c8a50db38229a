//! Embedding matrices on disk.
//!
//! Binary layout: `EMB1`, u32 rows, u32 cols, u8 dtype (1 = f64), three zero
//! bytes, then the row-major little-endian payload. Small matrices may also be
//! given as CSV with a `col0,col1,...` header.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const DTYPE_F64: u8 = 1;
const HEADER_LEN: usize = 16;

pub fn write_emb<T: Real, W: Write>(m: &Matrix<T>, mut w: W) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::invalid("too many rows"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::invalid("too many columns"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    buf.extend_from_slice(&[DTYPE_F64, 0, 0, 0]);
    for v in m.as_slice() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_emb<T: Real, R: Read>(mut r: R) -> Result<Matrix<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_emb(&bytes)
}

pub fn parse_emb<T: Real>(bytes: &[u8]) -> Result<Matrix<T>> {
    let bad = |msg: &str| Error::format("embedding file", msg);
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing EMB1 magic"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let rows = word(4) as usize;
    let cols = word(8) as usize;
    if bytes[12] != DTYPE_F64 {
        return Err(bad(&format!("unsupported dtype tag {}", bytes[12])));
    }
    if bytes[13..16] != [0, 0, 0] {
        return Err(bad("reserved bytes are not zero"));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(bad(&format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Matrix::from_row_major(rows, cols, data)
}

pub fn parse_csv<T: Real>(text: &str) -> Result<Matrix<T>> {
    let bad = |msg: String| Error::format("embedding csv", msg);
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols = header.split(',').count();
    for (k, name) in header.split(',').enumerate() {
        if name.trim() != format!("col{k}") {
            return Err(bad(format!("header field {k} is {name:?}, expected col{k}")));
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map(T::lit))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        if row.len() != cols {
            return Err(bad(format!("row {} has {} fields, expected {cols}", i + 1, row.len())));
        }
        rows.push(row);
    }
    let n = rows.len();
    Matrix::from_row_major(n, cols, rows.into_iter().flatten().collect())
}

pub fn to_csv<T: Real>(m: &Matrix<T>) -> String {
    let mut out = (0..m.cols()).map(|k| format!("col{k}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{:e}", v.as_f64())).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Reads either format, choosing by the magic bytes.
pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        parse_emb(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::format("embedding file", "neither EMB1 nor UTF-8 CSV"))?;
        parse_csv(text)
    }
}

pub fn save<T: Real>(m: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_emb(m, std::io::BufWriter::new(f))
}
