//! Small dense row-major matrices and the handful of kernels the surrogate needs.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Mat {
        let mut out = Mat::zeros(rows.len(), self.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(r));
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds `bias` to every row.
    pub fn add_row_bias(&mut self, bias: &[f64]) {
        debug_assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            for (a, b) in self.row_mut(r).iter_mut().zip(bias) {
                *a += b;
            }
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// `a · w` where `w` is a `[a.cols, out]` weight slice in row-major order.
pub fn matmul_w(a: &Mat, w: &[f64], out_cols: usize) -> Mat {
    debug_assert_eq!(w.len(), a.cols * out_cols);
    let mut out = Mat::zeros(a.rows, out_cols);
    for r in 0..a.rows {
        let arow = a.row(r);
        let orow = &mut out.data[r * out_cols..(r + 1) * out_cols];
        for (k, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let wrow = &w[k * out_cols..(k + 1) * out_cols];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += av * wv;
            }
        }
    }
    out
}

/// `a · b`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    debug_assert_eq!(a.cols, b.rows);
    matmul_w(a, &b.data, b.cols)
}

/// `a · bᵀ`.
pub fn matmul_bt(a: &Mat, b: &Mat) -> Mat {
    debug_assert_eq!(a.cols, b.cols);
    let mut out = Mat::zeros(a.rows, b.rows);
    for r in 0..a.rows {
        let arow = a.row(r);
        for c in 0..b.rows {
            out.data[r * b.rows + c] = dot(arow, b.row(c));
        }
    }
    out
}

/// Accumulates `aᵀ · b` into `acc` (a `[a.cols, b.cols]` row-major slice).
pub fn acc_at_b(acc: &mut [f64], a: &Mat, b: &Mat) {
    debug_assert_eq!(a.rows, b.rows);
    debug_assert_eq!(acc.len(), a.cols * b.cols);
    for r in 0..a.rows {
        let arow = a.row(r);
        let brow = b.row(r);
        for (k, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let accrow = &mut acc[k * b.cols..(k + 1) * b.cols];
            for (o, &bv) in accrow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `g · wᵀ` where `w` is `[out_rows, g.cols]`: the input gradient of [`matmul_w`].
pub fn matmul_wt(g: &Mat, w: &[f64], in_cols: usize) -> Mat {
    debug_assert_eq!(w.len(), in_cols * g.cols);
    let mut out = Mat::zeros(g.rows, in_cols);
    for r in 0..g.rows {
        let grow = g.row(r);
        let orow = &mut out.data[r * in_cols..(r + 1) * in_cols];
        for (k, o) in orow.iter_mut().enumerate() {
            *o = dot(grow, &w[k * g.cols..(k + 1) * g.cols]);
        }
    }
    out
}

/// Accumulates the column sums of `g` into `acc`.
pub fn acc_col_sums(acc: &mut [f64], g: &Mat) {
    debug_assert_eq!(acc.len(), g.cols);
    for r in 0..g.rows {
        for (a, v) in acc.iter_mut().zip(g.row(r)) {
            *a += v;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation (denominator `n`).
pub fn std_pop(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation (denominator `n - 1`).
pub fn std_sample(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64)
}
