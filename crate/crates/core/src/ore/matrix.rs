use std::fmt;

use serde::ser::{Serialize, SerializeSeq, Serializer};

use super::SkewPoly;
use crate::expr::Expr;

/// Dense matrix over K(δ].
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SkewMatrix {
    rows: usize,
    cols: usize,
    data: Vec<SkewPoly>,
}

impl SkewMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SkewMatrix {
            rows,
            cols,
            data: vec![SkewPoly::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SkewMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = SkewPoly::one();
        }
        m
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<SkewPoly>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        SkewMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_exprs(rows: Vec<Vec<Expr>>) -> Self {
        SkewMatrix::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(SkewPoly::scalar).collect())
                .collect(),
        )
    }

    pub fn column(entries: Vec<SkewPoly>) -> Self {
        let n = entries.len();
        SkewMatrix {
            rows: n,
            cols: 1,
            data: entries,
        }
    }

    pub fn row_vector(entries: Vec<SkewPoly>) -> Self {
        let n = entries.len();
        SkewMatrix {
            rows: 1,
            cols: n,
            data: entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[SkewPoly] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<SkewPoly> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &SkewPoly> {
        self.data.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(SkewPoly::is_zero)
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| {
                    let e = &self[(i, j)];
                    if i == j {
                        e.as_scalar().is_some_and(|c| c.equiv(&Expr::one()))
                    } else {
                        e.is_zero()
                    }
                })
            })
    }

    pub fn max_degree(&self) -> u32 {
        self.data.iter().filter_map(SkewPoly::degree).max().unwrap_or(0)
    }

    pub fn is_causal(&self) -> bool {
        self.data.iter().all(SkewPoly::is_causal)
    }

    pub fn mul(&self, other: &SkewMatrix) -> SkewMatrix {
        assert_eq!(self.cols, other.rows, "matrix product dimensions");
        let mut out = SkewMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] = &out[(i, j)] + &a.mul(b);
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, other: &SkewMatrix) -> SkewMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        SkewMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SkewMatrix) -> SkewMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        SkewMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn map(&self, f: impl FnMut(&SkewPoly) -> SkewPoly) -> SkewMatrix {
        SkewMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn map_coeffs(&self, mut f: impl FnMut(&Expr) -> Expr) -> SkewMatrix {
        self.map(|p| p.map_coeffs(&mut f))
    }

    pub fn select_rows(&self, idx: &[usize]) -> SkewMatrix {
        SkewMatrix::from_rows(idx.iter().map(|&i| self.row(i).to_vec()).collect())
            .with_cols(self.cols)
    }

    pub fn select_cols(&self, idx: &[usize]) -> SkewMatrix {
        let mut out = SkewMatrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (k, &j) in idx.iter().enumerate() {
                out[(i, k)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn with_cols(mut self, cols: usize) -> SkewMatrix {
        if self.rows == 0 {
            self.cols = cols;
        }
        self
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &SkewMatrix) -> SkewMatrix {
        assert!(self.rows == 0 || other.rows == 0 || self.cols == other.cols);
        let cols = if self.rows == 0 { other.cols } else { self.cols };
        let mut data = self.data.clone();
        data.extend(other.data.iter().cloned());
        SkewMatrix {
            rows: self.rows + other.rows,
            cols,
            data,
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// `row_t ← row_t − q·row_s`.
    pub(crate) fn row_sub(&mut self, target: usize, q: &SkewPoly, source: usize) {
        for j in 0..self.cols {
            let s = &self[(source, j)];
            if s.is_zero() {
                continue;
            }
            let t = q.mul(s);
            self[(target, j)] = &self[(target, j)] - &t;
        }
    }

    /// `col_t ← col_t + col_s·q`.
    pub(crate) fn col_add(&mut self, target: usize, source: usize, q: &SkewPoly) {
        for i in 0..self.rows {
            let s = &self[(i, source)];
            if s.is_zero() {
                continue;
            }
            let t = s.mul(q);
            self[(i, target)] = &self[(i, target)] + &t;
        }
    }

    /// `row_i ← c·row_i`.
    pub(crate) fn row_scale(&mut self, i: usize, c: &SkewPoly) {
        for j in 0..self.cols {
            self[(i, j)] = c.mul(&self[(i, j)]);
        }
    }

    /// `col_j ← col_j·c`.
    pub(crate) fn col_scale(&mut self, j: usize, c: &SkewPoly) {
        for i in 0..self.rows {
            self[(i, j)] = self[(i, j)].mul(c);
        }
    }

    /// `{degree: coefficient}` maps per entry.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}

impl std::ops::Index<(usize, usize)> for SkewMatrix {
    type Output = SkewPoly;
    fn index(&self, (i, j): (usize, usize)) -> &SkewPoly {
        assert!(i < self.rows && j < self.cols, "index out of range");
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SkewMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut SkewPoly {
        assert!(i < self.rows && j < self.cols, "index out of range");
        &mut self.data[i * self.cols + j]
    }
}

impl Serialize for SkewMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

impl fmt::Display for SkewMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.rows {
            if i > 0 {
                f.write_str("; ")?;
            }
            let row: Vec<String> = self.row(i).iter().map(|p| p.to_string()).collect();
            f.write_str(&row.join(", "))?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for SkewMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SkewMatrix{}x{}{self}", self.rows, self.cols)
    }
}
