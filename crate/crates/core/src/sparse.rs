//! Compressed-sparse-column matrices and their on-disk encoding.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "PXCSC\0\0\x01"
//! rows    u64
//! cols    u64
//! nnz     u64
//! colptr  (cols + 1) x u64
//! rowidx  nnz x u64
//! values  nnz x f64
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

pub const CSC_MAGIC: &[u8; 8] = b"PXCSC\0\0\x01";

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("bad magic")]
    Magic,
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("structure: {0}")]
    Structure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed;
    /// rows inside each column come out sorted.
    pub fn from_triplets(rows: usize, cols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut per_col: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); cols];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            *per_col[c].entry(r).or_insert(0.0) += v;
        }
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for col in per_col {
            for (r, v) in col {
                row_idx.push(r);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(row, value)` pairs of column `c`.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn column_sum(&self, c: usize) -> f64 {
        self.column(c).map(|(_, v)| v).sum()
    }

    pub fn column_is_empty(&self, c: usize) -> bool {
        self.col_ptr[c] == self.col_ptr[c + 1]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.col_ptr[c]..self.col_ptr[c + 1];
        match self.row_idx[span.clone()].binary_search(&r) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    /// `(row, col, value)` for every stored entry, column-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |c| self.column(c).map(move |(r, v)| (r, c, v)))
    }

    /// `y = M x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for (r, v) in self.column(c) {
                y[r] += v * xc;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * (self.col_ptr.len() + 2 * self.nnz()));
        out.extend_from_slice(CSC_MAGIC);
        for n in [self.rows, self.cols, self.nnz()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for &p in &self.col_ptr {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &r in &self.row_idx {
            out.extend_from_slice(&(r as u64).to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes and structurally validates an encoded matrix.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CSC_MAGIC {
            return Err(DecodeError::Magic);
        }
        let rows = r.usize()?;
        let cols = r.usize()?;
        let nnz = r.usize()?;
        // bound the sizes by what the buffer can hold before allocating
        let remaining = bytes.len() - r.pos;
        let needed = cols
            .checked_add(1)
            .and_then(|n| n.checked_add(nnz.checked_mul(2)?))
            .and_then(|n| n.checked_mul(8))
            .ok_or(DecodeError::Truncated(bytes.len()))?;
        if needed > remaining {
            return Err(DecodeError::Truncated(bytes.len()));
        }
        if needed < remaining {
            return Err(DecodeError::Trailing(remaining - needed));
        }
        let col_ptr = (0..=cols).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        let row_idx = (0..nnz).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        let values = (0..nnz).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;

        if col_ptr[0] != 0 || col_ptr[cols] != nnz {
            return Err(DecodeError::Structure("column pointers do not span the entries".into()));
        }
        for c in 0..cols {
            if col_ptr[c] > col_ptr[c + 1] {
                return Err(DecodeError::Structure(format!("column pointer decreases at column {c}")));
            }
            if col_ptr[c + 1] > nnz {
                return Err(DecodeError::Structure(format!("column pointer past the entries at column {c}")));
            }
            let rowsc = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            if rowsc.iter().any(|&i| i >= rows) {
                return Err(DecodeError::Structure(format!("row index out of range in column {c}")));
            }
            if rowsc.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DecodeError::Structure(format!("unsorted or repeated rows in column {c}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecodeError::Structure("non-finite value".into()));
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated(self.pos))?;
        let s = self.bytes.get(self.pos..end).ok_or(DecodeError::Truncated(self.pos))?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize, DecodeError> {
        usize::try_from(self.u64()?).map_err(|_| DecodeError::Structure("size exceeds address space".into()))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Fixed-dimension f64 vector table: magic `PXVEC\0\0\x01`, count u64, dim u64,
/// then `count * dim` little-endian f64.
pub const VEC_MAGIC: &[u8; 8] = b"PXVEC\0\0\x01";

pub fn encode_vectors(dim: usize, rows: &[&[f64]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + rows.len() * dim * 8);
    out.extend_from_slice(VEC_MAGIC);
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    for row in rows {
        assert_eq!(row.len(), dim);
        for v in *row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_vectors(bytes: &[u8]) -> Result<(usize, Vec<Vec<f64>>), DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != VEC_MAGIC {
        return Err(DecodeError::Magic);
    }
    let count = r.usize()?;
    let dim = r.usize()?;
    if dim == 0 && count > 0 {
        return Err(DecodeError::Structure("zero-dimensional vectors".into()));
    }
    let remaining = bytes.len() - r.pos;
    let needed = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .ok_or(DecodeError::Truncated(bytes.len()))?;
    if needed > remaining {
        return Err(DecodeError::Truncated(bytes.len()));
    }
    if needed < remaining {
        return Err(DecodeError::Trailing(remaining - needed));
    }
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let row = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(DecodeError::Structure("non-finite vector component".into()));
        }
        rows.push(row);
    }
    Ok((dim, rows))
}
