use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Diagonal jitter added once before a factorization is declared failed.
pub const CHOL_JITTER: f64 = 1e-8;

/// Lower Cholesky factor, stored row-major so that row dot products are contiguous.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    l: Vec<f64>,
    log_det: f64,
    jittered: bool,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Whether the one-shot diagonal jitter was needed.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    #[inline]
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.l(i, j) } else { 0.0 })
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(a, c)| a * c).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `L^T x = z` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            b[i] /= self.l[i * n + i];
            let xi = b[i];
            let row = &self.l[i * n..i * n + i];
            for (bk, lik) in b[..i].iter_mut().zip(row) {
                *bk -= lik * xi;
            }
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.solve(b.as_slice()))
    }

    /// `b^T A^{-1} b`, computed as `|L^{-1} b|^2`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let mut z = b.to_vec();
        self.solve_lower_in_place(&mut z);
        z.iter().map(|v| v * v).sum()
    }

    /// Explicit inverse of the factored matrix, as `L^{-T} L^{-1}`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.n;
        // row j of m holds column j of L^{-1}, nonzero from index j on
        let mut m = vec![0.0; n * n];
        for j in 0..n {
            let z = &mut m[j * n..(j + 1) * n];
            for i in j..n {
                let row = &self.l[i * n..i * n + i];
                let s: f64 = row[j..i].iter().zip(&z[j..i]).map(|(a, b)| a * b).sum();
                let rhs = if i == j { 1.0 } else { 0.0 };
                z[i] = (rhs - s) / self.l[i * n + i];
            }
        }
        let mut inv = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..=a {
                let ra = &m[a * n + a..(a + 1) * n];
                let rb = &m[b * n + a..(b + 1) * n];
                let v: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                inv[(a, b)] = v;
                inv[(b, a)] = v;
            }
        }
        inv
    }
}

fn factor_once(a: &DMatrix<f64>, jitter: f64) -> Result<CholFactor> {
    let n = a.nrows();
    let mut l = vec![0.0; n * n];
    let mut log_det = 0.0;
    for j in 0..n {
        let (rows_before, rest) = l.split_at_mut(j * n);
        let row_j = &mut rest[..n];
        for i in 0..j {
            let row_i = &rows_before[i * n..i * n + i];
            let s: f64 = row_i.iter().zip(&row_j[..i]).map(|(x, y)| x * y).sum();
            row_j[i] = (a[(j, i)] - s) / rows_before[i * n + i];
        }
        let s: f64 = row_j[..j].iter().map(|v| v * v).sum();
        let pivot = a[(j, j)] + jitter - s;
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let d = pivot.sqrt();
        row_j[j] = d;
        log_det += 2.0 * d.ln();
    }
    Ok(CholFactor {
        n,
        l,
        log_det,
        jittered: jitter > 0.0,
    })
}

/// Cholesky factorization with a single jitter retry of [`CHOL_JITTER`].
pub fn chol_factor(a: &DMatrix<f64>) -> Result<CholFactor> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::invalid("cholesky of an empty matrix"));
    }
    match factor_once(a, 0.0) {
        Ok(f) => Ok(f),
        Err(_) => factor_once(a, CHOL_JITTER),
    }
}

pub fn chol_solve(f: &CholFactor, b: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_dim(f.dim(), b.len())?;
    Ok(f.solve(b))
}
