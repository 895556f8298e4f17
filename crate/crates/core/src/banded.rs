//! Complex banded matrices with LU factorization (partial pivoting).
//!
//! Storage is row-major: row `i` holds columns `i-kl ..= i+ku`. Rectangular
//! shapes are allowed (the band is anchored at the row index), which covers
//! the boundary-condition elimination maps.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<Complex64>,
}

impl BandedMatrix {
    pub fn zeros(rows: usize, cols: usize, kl: usize, ku: usize) -> Self {
        let width = kl + ku + 1;
        Self {
            rows,
            cols,
            kl,
            ku,
            data: vec![Complex64::new(0.0, 0.0); rows * width],
        }
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n, 0, 0);
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![Complex64::new(1.0, 0.0); n])
    }

    #[inline]
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku && i < self.rows && j < self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + (j + self.kl - i)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + (j + self.kl - i)] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + (j + self.kl - i)] += v;
    }

    /// Clear an entire row (used when installing boundary-condition rows).
    pub fn clear_row(&mut self, i: usize) {
        let w = self.width();
        for v in &mut self.data[i * w..(i + 1) * w] {
            *v = Complex64::new(0.0, 0.0);
        }
    }

    pub fn col_range(&self, i: usize) -> (usize, usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.cols.saturating_sub(1));
        (lo, hi)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![Complex64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let (lo, hi) = self.col_range(i);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in lo..=hi {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// Conjugate transpose; band parameters swap.
    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows, self.ku, self.kl);
        for i in 0..self.rows {
            let (lo, hi) = self.col_range(i);
            for j in lo..=hi {
                let v = self.get(i, j);
                if v != Complex64::new(0.0, 0.0) {
                    out.set(j, i, v.conj());
                }
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let kl = (self.kl + other.kl).min(self.rows.saturating_sub(1));
        let ku = (self.ku + other.ku).min(other.cols.saturating_sub(1));
        let mut out = Self::zeros(self.rows, other.cols, kl, ku);
        for i in 0..self.rows {
            let (klo, khi) = self.col_range(i);
            for k in klo..=khi {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let (jlo, jhi) = other.col_range(k);
                for j in jlo..=jhi {
                    let b = other.get(k, j);
                    if b != Complex64::new(0.0, 0.0) {
                        out.add_at(i, j, a * b);
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let kl = self.kl.max(other.kl);
        let ku = self.ku.max(other.ku);
        let mut out = Self::zeros(self.rows, self.cols, kl, ku);
        for i in 0..self.rows {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(self.cols.saturating_sub(1));
            for j in lo..=hi {
                let v = self.get(i, j) + other.get(i, j);
                if v != Complex64::new(0.0, 0.0) {
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn scale(&mut self, c: Complex64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// Left multiplication by `diag(d)`.
    pub fn scale_rows(&mut self, d: &[Complex64]) {
        assert_eq!(d.len(), self.rows);
        let w = self.width();
        for i in 0..self.rows {
            for v in &mut self.data[i * w..(i + 1) * w] {
                *v *= d[i];
            }
        }
    }

    /// Frobenius-type scale of the matrix (max absolute entry).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting (LAPACK gbtrf layout).
    pub fn lu(&self) -> Result<BandedLu> {
        self.lu_with_tol(1e-14)
    }

    /// LU with a caller-chosen relative pivot tolerance. `tol = 0` accepts
    /// any nonzero pivot — the near-singular factorizations wanted by
    /// inverse iteration on an engineered kernel.
    pub fn lu_with_tol(&self, tol: f64) -> Result<BandedLu> {
        if self.rows != self.cols {
            return Err(Error::SingularFactorization(
                "LU requires a square matrix".into(),
            ));
        }
        BandedLu::factor(self, tol)
    }
}

/// Banded LU factors in gbtrf working storage: entry `(i,j)` lives at
/// `ab[(kv + i - j) * n + j]` with `kv = kl + ku` fill superdiagonals.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<Complex64>,
    ipiv: Vec<usize>,
    /// product of pivot phases times permutation parity; |det_phase| = 1
    det_phase: Complex64,
    min_pivot: f64,
    max_pivot: f64,
}

impl BandedLu {
    fn factor(a: &BandedMatrix, tol: f64) -> Result<Self> {
        let n = a.rows;
        let kl = a.kl;
        let ku = a.ku;
        let kv = kl + ku;
        let ldab = kv + kl + 1; // band rows in working storage
        let mut ab = vec![Complex64::new(0.0, 0.0); ldab * n];
        let idx = |band_row: usize, col: usize| band_row * n + col;
        for i in 0..n {
            let (lo, hi) = a.col_range(i);
            for j in lo..=hi {
                ab[idx(kv + i - j, j)] = a.get(i, j);
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut ipiv = vec![0usize; n];
        let mut det_phase = Complex64::new(1.0, 0.0);
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot: f64 = 0.0;
        let mut ju: usize = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search in column j, rows j..=j+km
            let mut jp = 0usize;
            let mut best = ab[idx(kv, j)].norm();
            for p in 1..=km {
                let v = ab[idx(kv + p, j)].norm();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            ju = ju.max((j + ku + jp).min(n - 1));
            let piv = ab[idx(kv + jp, j)];
            if piv.norm() < tol * scale || piv.norm() == 0.0 {
                return Err(Error::SingularFactorization(format!(
                    "pivot magnitude {:.3e} below {tol:.1e} * scale {:.3e} at column {j}",
                    piv.norm(),
                    scale
                )));
            }
            min_pivot = min_pivot.min(piv.norm());
            max_pivot = max_pivot.max(piv.norm());
            det_phase *= piv / piv.norm();
            if jp != 0 {
                det_phase = -det_phase;
                for c in j..=ju {
                    ab.swap(idx(kv + jp + j - c, c), idx(kv + j - c, c));
                }
            }
            if km > 0 {
                let d = ab[idx(kv, j)];
                for i in 1..=km {
                    ab[idx(kv + i, j)] /= d;
                }
                for c in (j + 1)..=ju {
                    let ujc = ab[idx(kv + j - c, c)];
                    if ujc != Complex64::new(0.0, 0.0) {
                        for i in 1..=km {
                            let lij = ab[idx(kv + i, j)];
                            ab[idx(kv + i + j - c, c)] -= lij * ujc;
                        }
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            ab,
            ipiv,
            det_phase,
            min_pivot,
            max_pivot,
        })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kv = self.kl + self.ku;
        let idx = |band_row: usize, col: usize| band_row * n + col;
        let mut x = b.to_vec();
        // forward: apply P and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            for i in 1..=km {
                let lij = self.ab[idx(kv + i, j)];
                let xj = x[j];
                x[j + i] -= lij * xj;
            }
        }
        // back substitution with U (upper bandwidth kv)
        for j in (0..n).rev() {
            x[j] /= self.ab[idx(kv, j)];
            let lo = j.saturating_sub(kv);
            let xj = x[j];
            for i in lo..j {
                x[i] -= self.ab[idx(kv + i - j, j)] * xj;
            }
        }
        x
    }

    /// Determinant phase: sign for real matrices, unit complex in general.
    pub fn det_phase(&self) -> Complex64 {
        self.det_phase
    }

    /// Ratio of smallest to largest pivot; crude conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.min_pivot / self.max_pivot
    }
}

/// Dense column-major Gaussian elimination, used as an oracle in tests and
/// for the small projected blocks in the nullspace analysis.
pub fn dense_solve(a: &[Vec<Complex64>], b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = b.len();
    let mut m: Vec<Vec<Complex64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let (p, mag) = (k..n)
            .map(|r| (r, m[r][k].norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if mag < 1e-300 {
            return Err(Error::SingularFactorization("dense pivot ~ 0".into()));
        }
        m.swap(k, p);
        x.swap(k, p);
        for r in (k + 1)..n {
            let f = m[r][k] / m[k][k];
            for c in k..n {
                let v = m[k][c];
                m[r][c] -= f * v;
            }
            let xk = x[k];
            x[r] -= f * xk;
        }
    }
    for k in (0..n).rev() {
        let mut acc = x[k];
        for c in (k + 1)..n {
            acc -= m[k][c] * x[c];
        }
        x[k] = acc / m[k][k];
    }
    Ok(x)
}
