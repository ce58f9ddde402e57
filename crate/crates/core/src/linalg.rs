//! Dense numeric primitives: a row-major matrix, covariance, symmetric
//! eigendecomposition (cyclic Jacobi, or tridiagonal QL for large
//! matrices), and PCA with whitening.
//!
//! Everything here is plain `Vec<f64>` arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative eigenvalue floor: components with `λ ≤ floor·λ₁` are dropped.
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOLERANCE: f64 = 1e-12;
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.values)
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::Contract(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows.saturating_mul(cols),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite value {} at ({}, {})",
                values[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Contract(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Contract(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.values[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix made of the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        let mut values = Vec::with_capacity(self.rows * k);
        for r in self.row_iter() {
            values.extend_from_slice(&r[..k]);
        }
        Matrix {
            rows: self.rows,
            cols: k,
            values,
        }
    }

    /// Column means. Each mean is accumulated relative to the first row so
    /// that a constant column yields its value exactly.
    pub fn column_means(&self) -> Vec<f64> {
        if self.rows == 0 {
            return vec![0.0; self.cols];
        }
        let first = self.row(0).to_vec();
        let mut acc = vec![0.0; self.cols];
        for r in self.row_iter().skip(1) {
            for ((a, &x), &f) in acc.iter_mut().zip(r).zip(&first) {
                *a += x - f;
            }
        }
        let n = self.rows as f64;
        first.iter().zip(&acc).map(|(&f, &a)| f + a / n).collect()
    }

    pub fn centered(&self, mean: &[f64]) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, &m) in out.row_mut(i).iter_mut().zip(mean) {
                *v -= m;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = tol * self.max_abs().max(1.0);
        (0..self.rows).all(|i| (i + 1..self.cols).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= scale))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sample covariance of already-centered data (divisor `N − 1`).
pub fn covariance(data: &Matrix) -> Result<Matrix> {
    let n_rows = data.rows();
    if n_rows < 2 {
        return Err(Error::Degenerate(format!(
            "covariance needs at least 2 rows, got {n_rows}"
        )));
    }
    // Columns made contiguous so each entry is a single dot product.
    let t = data.transpose();
    let n = data.cols();
    let denom = (n_rows - 1) as f64;
    let mut cov = Matrix::zeros(n, n);
    for i in 0..n {
        let ci = t.row(i);
        for j in i..n {
            let v = dot(ci, t.row(j)) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(cov)
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Row `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
    /// Jacobi sweeps, or QL iterations above [`JACOBI_MAX_DIM`].
    pub sweeps: usize,
}

/// Largest matrix handled by Jacobi; bigger ones go through Householder
/// tridiagonalization and implicit QL, which is about ten times cheaper there.
pub const JACOBI_MAX_DIM: usize = 256;

/// Symmetric eigendecomposition.
///
/// Up to [`JACOBI_MAX_DIM`] rows this is cyclic Jacobi, converging when the
/// off-diagonal Frobenius norm drops below `1e-12·‖m‖_F` and giving up
/// after 100 sweeps. Each eigenvector is signed so that its
/// largest-magnitude entry is positive.
pub fn sym_eig(m: &Matrix) -> Result<SymEigen> {
    if !m.is_symmetric(SYMMETRY_TOLERANCE) {
        return Err(Error::Contract(format!(
            "sym_eig needs a symmetric matrix ({}x{})",
            m.rows(),
            m.cols()
        )));
    }
    let (diag, vt, sweeps) = if m.rows() > JACOBI_MAX_DIM {
        tridiagonal_ql(m)?
    } else {
        jacobi(m)?
    };
    Ok(finish_eigen(diag, vt, sweeps))
}

fn finish_eigen(diag: Vec<f64>, vt: Matrix, sweeps: usize) -> SymEigen {
    let mut order: Vec<usize> = (0..diag.len()).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = vt.select_rows(&order);
    for i in 0..vectors.rows() {
        orient(vectors.row_mut(i));
    }
    SymEigen {
        values,
        vectors,
        sweeps,
    }
}

/// Unsorted eigenvalues, eigenvectors as rows, and the sweep count.
fn jacobi(m: &Matrix) -> Result<(Vec<f64>, Matrix, usize)> {
    let n = m.rows();
    let mut a = m.clone();
    // Eigenvectors are accumulated as rows so rotations touch contiguous memory.
    let mut vt = Matrix::identity(n);
    let fro = m.frobenius();
    let target = JACOBI_TOLERANCE * fro;
    let skip = 1e-14 * fro / (n.max(1) as f64);

    let off_norm = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += 2.0 * a.get(i, j) * a.get(i, j);
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    let mut off = off_norm(&a);
    while off >= target && fro > 0.0 {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:e})"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= skip {
                    continue;
                }
                rotate(&mut a, &mut vt, p, q);
            }
        }
        off = off_norm(&a);
    }
    Ok(((0..n).map(|i| a.get(i, i)).collect(), vt, sweeps))
}

/// Householder reduction to tridiagonal form followed by implicit QL with
/// Wilkinson-style shifts (the EISPACK tred2/tql2 pair).
///
/// `w` holds the transpose of the usual column-eigenvector matrix, so all
/// inner loops run over contiguous rows and the result has one eigenvector
/// per row.
fn tridiagonal_ql(m: &Matrix) -> Result<(Vec<f64>, Matrix, usize)> {
    let n = m.rows();
    let mut w = m.values.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    // v(r, c) of the column-eigenvector matrix lives at w[c * n + r].
    macro_rules! v {
        ($r:expr, $c:expr) => {
            w[($c) * n + ($r)]
        };
    }

    for j in 0..n {
        d[j] = v!(n - 1, j);
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v!(i - 1, j);
                v!(i, j) = 0.0;
                v!(j, i) = 0.0;
            }
        } else {
            for x in &mut d[..i] {
                *x /= scale;
                h += *x * *x;
            }
            let mut f = d[i - 1];
            let mut g = if f > 0.0 { -h.sqrt() } else { h.sqrt() };
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);
            for j in 0..i {
                f = d[j];
                v!(j, i) = f;
                g = e[j] + v!(j, j) * f;
                let col = &w[j * n..j * n + i];
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                let col = &mut w[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = v!(i - 1, j);
                v!(i, j) = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v!(n - 1, i) = v!(i, i);
        v!(i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v!(k, i + 1) / h;
            }
            for j in 0..=i {
                let (cur, next) = w.split_at_mut((i + 1) * n);
                let u = &next[..=i];
                let col = &mut cur[j * n..j * n + i + 1];
                let g: f64 = u.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for (c, dk) in col.iter_mut().zip(&d[..=i]) {
                    *c -= g * dk;
                }
            }
        }
        for k in 0..=i {
            v!(k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v!(n - 1, j);
        v!(n - 1, j) = 0.0;
    }
    if n > 0 {
        v!(n - 1, n - 1) = 1.0;
    }

    for i in 1..n {
        e[i - 1] = e[i];
    }
    if n > 0 {
        e[n - 1] = 0.0;
    }
    let eps = f64::EPSILON;
    let (mut f, mut tst1) = (0.0f64, 0.0f64);
    let mut iterations = 0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                iterations += 1;
                if iter > QL_MAX_ITERATIONS {
                    return Err(Error::Numeric(format!(
                        "QL eigensolver did not converge for eigenvalue {l} after {QL_MAX_ITERATIONS} iterations"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in &mut d[l + 2..] {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let vi = &mut lo[i * n..];
                    let vi1 = &mut hi[..n];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok((d, Matrix::new(n, n, w)?, iterations))
}

const QL_MAX_ITERATIONS: usize = 60;

fn rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize) {
    let n = a.rows();
    let apq = a.get(p, q);
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(p, k);
        let akq = a.get(q, k);
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        a.set(p, k, new_p);
        a.set(k, p, new_p);
        a.set(q, k, new_q);
        a.set(k, q, new_q);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    let cols = vt.cols();
    let (head, tail) = vt.values.split_at_mut(q * cols);
    let vp = &mut head[p * cols..(p + 1) * cols];
    let vq = &mut tail[..cols];
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Flips `v` so its largest-magnitude entry is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fitted PCA followed by per-component whitening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaWhitening {
    pub mean: Vec<f64>,
    /// `k×n`, rows are orthonormal principal axes.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
    /// `1/√λᵢ` for each retained component.
    pub whitening: Vec<f64>,
}

/// Fits PCA + whitening to the rows of `data`.
///
/// Components with `λᵢ ≤ eigen_floor·λ₁` are dropped, so rank-deficient data
/// simply yields fewer components. When there are fewer samples than
/// features the decomposition runs on the `N×N` Gram matrix instead of the
/// `n×n` covariance; both have the same non-zero spectrum.
pub fn fit_pca_whitening(data: &Matrix, eigen_floor: f64) -> Result<PcaWhitening> {
    let n_rows = data.rows();
    let n_cols = data.cols();
    if n_rows < 2 {
        return Err(Error::Degenerate(format!(
            "PCA needs at least 2 samples, got {n_rows}"
        )));
    }
    if n_cols == 0 {
        return Err(Error::Degenerate("PCA on zero-width data".into()));
    }
    if !(0.0..1.0).contains(&eigen_floor) {
        return Err(Error::Config(format!(
            "eigen floor must lie in [0, 1), got {eigen_floor}"
        )));
    }
    let mean = data.column_means();
    let centered = data.centered(&mean);
    let max_k = n_cols.min(n_rows - 1);

    let (components, eigenvalues) = if n_rows < n_cols {
        dual_components(&centered, eigen_floor, max_k)?
    } else {
        let eig = sym_eig(&covariance(&centered)?)?;
        let keep = retained(&eig.values, eigen_floor, max_k)?;
        (eig.vectors.select_rows(&(0..keep).collect::<Vec<_>>()), eig.values[..keep].to_vec())
    };
    let whitening = eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
    Ok(PcaWhitening {
        mean,
        components,
        eigenvalues,
        whitening,
    })
}

fn retained(values: &[f64], floor: f64, max_k: usize) -> Result<usize> {
    let lead = values.first().copied().unwrap_or(0.0);
    if lead <= 0.0 {
        return Err(Error::Degenerate(
            "all eigenvalues are zero (constant data)".into(),
        ));
    }
    Ok(values
        .iter()
        .take(max_k)
        .take_while(|&&l| l > floor * lead && l > 0.0)
        .count())
}

/// PCA through the Gram matrix `XXᵀ/(N−1)` for wide data.
fn dual_components(centered: &Matrix, floor: f64, max_k: usize) -> Result<(Matrix, Vec<f64>)> {
    let n_rows = centered.rows();
    let n_cols = centered.cols();
    let denom = (n_rows - 1) as f64;
    let mut gram = Matrix::zeros(n_rows, n_rows);
    for i in 0..n_rows {
        for j in i..n_rows {
            let v = dot(centered.row(i), centered.row(j)) / denom;
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let eig = sym_eig(&gram)?;
    let keep = retained(&eig.values, floor, max_k)?;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(keep);
    let mut values = Vec::with_capacity(keep);
    for (i, &lambda) in eig.values.iter().enumerate().take(keep) {
        let g = eig.vectors.row(i);
        let mut h = vec![0.0; n_cols];
        for (j, &gj) in g.iter().enumerate() {
            if gj == 0.0 {
                continue;
            }
            for (hk, &xk) in h.iter_mut().zip(centered.row(j)) {
                *hk += gj * xk;
            }
        }
        // Modified Gram-Schmidt against the already accepted axes: the
        // back-projection loses orthogonality for the smallest eigenvalues.
        for prev in &rows {
            let d = dot(&h, prev);
            h.iter_mut().zip(prev).for_each(|(x, p)| *x -= d * p);
        }
        let scale = (denom * lambda).sqrt();
        let len = norm(&h);
        if len < 0.5 * scale {
            log::debug!("dropping PCA component {i}: back-projection collapsed ({:.3e})", len / scale);
            continue;
        }
        h.iter_mut().for_each(|x| *x /= len);
        orient(&mut h);
        rows.push(h);
        values.push(lambda);
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("no stable principal component".into()));
    }
    Ok((Matrix::from_rows(&rows)?, values))
}

impl PcaWhitening {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "expected a {}-vector, got length {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// `H(x − mean)` for the first `k` components, without whitening.
    pub fn project(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..k.min(self.output_dim()))
            .map(|i| dot(self.components.row(i), &diff))
            .collect())
    }

    /// `WH(x − mean)`: coordinates in the whitened principal basis.
    pub fn project_whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        let mut scratch = vec![0.0; self.input_dim()];
        self.project_whiten_into(x, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`project_whiten`](Self::project_whiten).
    pub fn project_whiten_into(&self, x: &[f64], scratch: &mut [f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        for ((s, a), m) in scratch.iter_mut().zip(x).zip(&self.mean) {
            *s = a - m;
        }
        for (i, o) in out.iter_mut().enumerate().take(self.output_dim()) {
            *o = dot(self.components.row(i), scratch) * self.whitening[i];
        }
        Ok(())
    }

    /// Whitens every row of `data`.
    pub fn transform(&self, data: &Matrix) -> Result<Matrix> {
        let k = self.output_dim();
        let mut out = Matrix::zeros(data.rows(), k);
        let mut scratch = vec![0.0; self.input_dim()];
        for i in 0..data.rows() {
            self.project_whiten_into(data.row(i), &mut scratch, out.row_mut(i))?;
        }
        Ok(out)
    }

    /// Copy keeping only the leading `k` components.
    pub fn truncated(&self, k: usize) -> PcaWhitening {
        let k = k.min(self.output_dim());
        PcaWhitening {
            mean: self.mean.clone(),
            components: self.components.select_rows(&(0..k).collect::<Vec<_>>()),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            whitening: self.whitening[..k].to_vec(),
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::Contract("Cholesky needs a square matrix".into()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Numeric(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let l = cholesky(m)?;
    let n = m.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for c in 0..n {
        // L y = e_c
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l.get(i, k) * col[k];
            }
            col[i] = s / l.get(i, i);
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l.get(k, i) * col[k];
            }
            col[i] = s / l.get(i, i);
        }
        for i in 0..n {
            inv.set(i, c, col[i]);
        }
    }
    // Symmetrize away round-off.
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, v);
            inv.set(j, i, v);
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        Matrix::new(rows, cols, values).unwrap()
    }

    fn brute_covariance(data: &Matrix) -> Vec<Vec<f64>> {
        let n = data.rows();
        let d = data.cols();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                mean[j] += data.get(i, j) / n as f64;
            }
        }
        let mut c = vec![vec![0.0; d]; d];
        for i in 0..n {
            for a in 0..d {
                for b in 0..d {
                    c[a][b] += (data.get(i, a) - mean[a]) * (data.get(i, b) - mean[b]) / (n - 1) as f64;
                }
            }
        }
        c
    }

    #[test]
    fn covariance_two_points() {
        let data = Matrix::from_rows(&[[-1.0, 0.0], [1.0, 0.0]]).unwrap();
        let c = covariance(&data).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn covariance_identical_rows_is_zero() {
        let data = Matrix::from_rows(&[[0.0, 0.0, 0.0]; 4]).unwrap();
        assert!(covariance(&data).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_matches_double_loop() {
        let data = random_matrix(50, 6, 1);
        let mean = data.column_means();
        let c = covariance(&data.centered(&mean)).unwrap();
        let oracle = brute_covariance(&data);
        for a in 0..6 {
            for b in 0..6 {
                assert!((c.get(a, b) - oracle[a][b]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn covariance_rejects_single_row() {
        let data = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(covariance(&data), Err(Error::Degenerate(_))));
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn eig_two_by_two() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vectors.row(0);
        assert!((v0[0] - r).abs() < 1e-12 && (v0[1] - r).abs() < 1e-12);
        let v1 = e.vectors.row(1);
        assert!((v1[0].abs() - r).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
    }

    fn check_decomposition(m: &Matrix, e: &SymEigen) {
        let n = m.rows();
        let max = m.max_abs();
        for i in 0..n {
            let v = e.vectors.row(i);
            assert!((dot(v, v) - 1.0).abs() < 1e-10, "vector {i} not unit");
            for r in 0..n {
                let av = dot(m.row(r), v);
                assert!((av - e.values[i] * v[r]).abs() < 1e-8 * max.max(1.0), "residual too large");
            }
        }
        let trace = m.trace();
        assert!((e.values.iter().sum::<f64>() - trace).abs() < 1e-9 * trace.abs().max(1.0));
        for r in 0..n {
            for c in 0..n {
                let rec: f64 = (0..n).map(|i| e.values[i] * e.vectors.get(i, r) * e.vectors.get(i, c)).sum();
                assert!((rec - m.get(r, c)).abs() <= 1e-8 * max);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eig_residuals_on_random_symmetric() {
        let b = random_matrix(10, 10, 7);
        let m = b.matmul(&b.transpose()).unwrap();
        check_decomposition(&m, &sym_eig(&m).unwrap());
    }

    #[test]
    fn ql_matches_jacobi() {
        for (rows, inner, seed) in [(40, 40, 11), (40, 5, 12), (1, 1, 13), (2, 3, 14)] {
            let b = random_matrix(rows, inner, seed);
            let m = b.matmul(&b.transpose()).unwrap();
            let (d, vt, _) = tridiagonal_ql(&m).unwrap();
            let ql = finish_eigen(d, vt, 0);
            check_decomposition(&m, &ql);
            let jac = sym_eig(&m).unwrap();
            for (a, b) in ql.values.iter().zip(&jac.values) {
                assert!((a - b).abs() < 1e-9 * jac.values[0].max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn large_matrices_use_ql() {
        let n = JACOBI_MAX_DIM + 20;
        let b = random_matrix(n, 30, 5);
        let mut m = b.matmul(&b.transpose()).unwrap();
        for i in 0..n {
            m.set(i, i, m.get(i, i) + 0.5);
        }
        let e = sym_eig(&m).unwrap();
        check_decomposition(&m, &e);
        // 30 directions carry signal, the rest sit exactly at the ridge
        assert!(e.values[29] > 1.0);
        assert!(e.values[30..].iter().all(|v| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn eig_sign_convention() {
        let b = random_matrix(6, 6, 3);
        let e = sym_eig(&b.matmul(&b.transpose()).unwrap()).unwrap();
        for i in 0..6 {
            let row = e.vectors.row(i);
            let big = row.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn pca_on_x_axis() {
        let data = Matrix::from_rows(&[[-2.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.5, 0.0, 0.0]]).unwrap();
        let p = fit_pca_whitening(&data, DEFAULT_EIGEN_FLOOR).unwrap();
        assert_eq!(p.output_dim(), 1);
        assert_eq!(p.components.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn pca_rejects_constant_data() {
        let data = Matrix::from_rows(&[[0.1, 0.7]; 5]).unwrap();
        assert!(matches!(fit_pca_whitening(&data, DEFAULT_EIGEN_FLOOR), Err(Error::Degenerate(_))));
    }

    #[test]
    fn isotropic_sample_has_similar_eigenvalues() {
        let data = random_matrix(2000, 5, 11);
        let p = fit_pca_whitening(&data, DEFAULT_EIGEN_FLOOR).unwrap();
        assert_eq!(p.output_dim(), 5);
        let (hi, lo) = (p.eigenvalues[0], p.eigenvalues[4]);
        assert!(hi / lo < 1.15 / 0.85, "eigenvalue spread {hi} / {lo}");
    }

    fn assert_whitened(p: &PcaWhitening, data: &Matrix, tol: f64) {
        let w = p.transform(data).unwrap();
        let means = w.column_means();
        assert!(means.iter().all(|m| m.abs() < 1e-9), "means {means:?}");
        let c = covariance(&w.centered(&means)).unwrap();
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((c.get(i, j) - want).abs() < tol, "cov[{i}][{j}] = {}", c.get(i, j));
            }
        }
        let hht = p.components.matmul(&p.components.transpose()).unwrap();
        for i in 0..hht.rows() {
            for j in 0..hht.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((hht.get(i, j) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn whitening_gives_identity_covariance() {
        let data = random_matrix(300, 8, 5);
        let p = fit_pca_whitening(&data, DEFAULT_EIGEN_FLOOR).unwrap();
        assert_whitened(&p, &data, 1e-6);
    }

    #[test]
    fn wide_data_uses_gram_route() {
        let data = random_matrix(30, 50, 9);
        let p = fit_pca_whitening(&data, DEFAULT_EIGEN_FLOOR).unwrap();
        assert_eq!(p.output_dim(), 29);
        assert_whitened(&p, &data, 1e-6);
    }

    #[test]
    fn repeated_coordinate_is_rank_deficient() {
        let base = random_matrix(100, 4, 2);
        let rows: Vec<Vec<f64>> = base.row_iter().map(|r| vec![r[0], r[1], r[2], r[3], r[1]]).collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let p = fit_pca_whitening(&data, DEFAULT_EIGEN_FLOOR).unwrap();
        assert_eq!(p.output_dim(), 4);
    }

    #[test]
    fn project_whiten_basics() {
        let data = random_matrix(200, 4, 4);
        let p = fit_pca_whitening(&data, DEFAULT_EIGEN_FLOOR).unwrap();
        assert!(p.project_whiten(&p.mean).unwrap().iter().all(|&v| v == 0.0));
        let x: Vec<f64> = p
            .mean
            .iter()
            .zip(p.components.row(0))
            .map(|(m, h)| m + h * p.eigenvalues[0].sqrt())
            .collect();
        let u = p.project_whiten(&x).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12);
        assert!(u[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(matches!(p.project_whiten(&[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn spd_inverse_round_trip() {
        let b = random_matrix(5, 5, 21);
        let mut m = b.matmul(&b.transpose()).unwrap();
        for i in 0..5 {
            m.set(i, i, m.get(i, i) + 1.0);
        }
        let inv = spd_inverse(&m).unwrap();
        let id = m.matmul(&inv).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id.get(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
    }
}
