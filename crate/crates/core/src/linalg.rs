//! Small dense matrix kernels: vech/vec half-vectorization, duplication
//! matrices and their Moore-Penrose inverses, Cholesky factorization,
//! cyclic-Jacobi spectral decomposition, and the matrix log/exp pair.
//!
//! Everything here targets the small symmetric matrices that arise as
//! random-effect covariances (dimension of order 8 at most) and the
//! modest Hessians of the outer optimizer. No attempt is made at
//! large-matrix performance.

use crate::error::{Error, Result};

/// Length of the half-vectorization of a `d x d` symmetric matrix.
#[inline]
pub fn vech_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of entry `(i, j)` with `i >= j` in column-major vech ordering.
#[inline]
pub fn vech_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < d);
    j * d - (j * j - j) / 2 + (i - j)
}

/// Recover the matrix dimension from a packed vech length.
pub fn dim_from_vech_len(len: usize) -> Result<usize> {
    let d = ((((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1)) / 2;
    if vech_len(d) != len {
        return Err(Error::Dimension(format!(
            "{len} is not a valid vech length (d(d+1)/2)"
        )));
    }
    Ok(d)
}

// ── Dense rectangular matrix ────────────────────────────────────────

/// Dense row-major matrix. Only the handful of operations the crate
/// needs are provided.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            a: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat {
            rows,
            cols,
            a: data.to_vec(),
        })
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
        self.a[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.a[i * self.cols..(i + 1) * self.cols];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }

    /// `selfᵀ x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for j in 0..self.cols {
                y[j] += self.get(i, j) * xi;
            }
        }
        y
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.a[i * out.cols + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }
}

// ── Symmetric matrix, packed lower triangle ────────────────────────

/// Symmetric `d x d` matrix stored as its packed lower triangle in
/// column-major vech ordering; the upper half is mirrored on read.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    d: usize,
    v: Vec<f64>,
}

impl SymMat {
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        SymMat {
            d,
            v: vec![0.0; vech_len(d)],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = SymMat::zeros(d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from a packed vech vector (column-major, on/below diagonal).
    pub fn from_vech(v: Vec<f64>) -> Result<Self> {
        let d = dim_from_vech_len(v.len())?;
        Ok(SymMat { d, v })
    }

    /// Build from row slices; the strict upper triangle is ignored.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("rows must form a square matrix".into()));
        }
        let mut m = SymMat::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(m)
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        let mut m = SymMat::zeros(d);
        for i in 0..d {
            m.set(i, i, s);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.v[vech_index(self.d, hi, lo)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, val: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.v[vech_index(self.d, hi, lo)] = val;
    }

    /// Borrow the packed half-vectorization.
    #[inline]
    pub fn vech(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn vech_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    /// Overwrite with `s * other` (same dimension).
    pub fn copy_scaled_from(&mut self, other: &SymMat, s: f64) {
        assert_eq!(self.d, other.d);
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a = s * b;
        }
    }

    /// `self += s * x xᵀ`.
    pub fn rank1_update(&mut self, x: &[f64], s: f64) {
        assert_eq!(x.len(), self.d);
        for j in 0..self.d {
            for i in j..self.d {
                self.v[vech_index(self.d, i, j)] += s * x[i] * x[j];
            }
        }
    }

    pub fn into_vech(self) -> Vec<f64> {
        self.v
    }

    /// Column-major `vec` of the full matrix.
    pub fn vec_col_major(&self) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for j in 0..d {
            for i in 0..d {
                out[j * d + i] = self.get(i, j);
            }
        }
        out
    }

    pub fn to_mat(&self) -> Mat {
        let d = self.d;
        let mut m = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    /// Row-of-rows copy, handy for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.d).map(|i| self.get(i, i)).collect()
    }

    /// Strictly-below-diagonal entries, column-major (left to right,
    /// top to bottom within each column).
    pub fn vecbd(&self) -> Result<Vec<f64>> {
        vecbd_of(&|i, j| self.get(i, j), self.d)
    }

    pub fn add_assign_scaled(&mut self, other: &SymMat, s: f64) {
        assert_eq!(self.d, other.d);
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.v.iter_mut() {
            *a *= s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d);
        let mut y = vec![0.0; self.d];
        for i in 0..self.d {
            let mut acc = 0.0;
            for j in 0..self.d {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let y = self.matvec(x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                let v = self.get(i, j);
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// Cholesky factorization; errors unless the matrix is SPD.
    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::new(self)
    }

    /// Spectral decomposition by cyclic Jacobi rotations. Eigenvalues are
    /// returned in ascending order with matching eigenvector columns.
    pub fn spectral(&self) -> Result<Spectral> {
        jacobi_eigen(self)
    }

    /// Matrix logarithm via the spectral decomposition. Requires all
    /// eigenvalues strictly positive.
    pub fn matrix_log(&self) -> Result<SymMat> {
        let spec = self.spectral()?;
        if spec.values.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite(
                "matrix logarithm needs strictly positive eigenvalues".into(),
            ));
        }
        Ok(spec.apply(f64::ln))
    }

    /// Matrix exponential via the spectral decomposition.
    pub fn matrix_exp(&self) -> Result<SymMat> {
        Ok(self.spectral()?.apply(f64::exp))
    }
}

/// `diagonal` of an arbitrary dense matrix (see also [`SymMat::diagonal`]).
pub fn diagonal_of(m: &Mat) -> Vec<f64> {
    let n = m.rows().min(m.cols());
    (0..n).map(|i| m.get(i, i)).collect()
}

/// Strictly-below-diagonal entries of a dense square matrix in
/// column-major order.
pub fn vecbd_of_mat(m: &Mat) -> Result<Vec<f64>> {
    assert_eq!(m.rows(), m.cols());
    vecbd_of(&|i, j| m.get(i, j), m.rows())
}

fn vecbd_of(get: &dyn Fn(usize, usize) -> f64, d: usize) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::Dimension(
            "vecbd needs a matrix of dimension at least 2".into(),
        ));
    }
    let mut out = Vec::with_capacity(d * (d - 1) / 2);
    for j in 0..d {
        for i in (j + 1)..d {
            out.push(get(i, j));
        }
    }
    Ok(out)
}

// ── vech / vec maps ─────────────────────────────────────────────────

/// Half-vectorization of a symmetric matrix.
pub fn vech(a: &SymMat) -> Vec<f64> {
    a.vech().to_vec()
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64]) -> Result<SymMat> {
    SymMat::from_vech(v.to_vec())
}

/// Inverse of `vec`: rebuild a symmetric matrix from its column-major
/// flattening. Off-diagonal pairs are averaged, so the input must be
/// (numerically) symmetric for an exact round-trip.
pub fn unvec(flat: &[f64], d: usize) -> Result<SymMat> {
    if flat.len() != d * d {
        return Err(Error::Dimension(format!(
            "expected {} entries for vec of a {d}x{d} matrix, got {}",
            d * d,
            flat.len()
        )));
    }
    let mut m = SymMat::zeros(d);
    for j in 0..d {
        for i in j..d {
            let v = 0.5 * (flat[j * d + i] + flat[i * d + j]);
            m.set(i, j, v);
        }
    }
    Ok(m)
}

/// Duplication matrix `D_d`: the unique 0/1 matrix with
/// `D_d vech(A) = vec(A)` for symmetric `A`.
pub fn duplication_matrix(d: usize) -> Mat {
    assert!(d >= 1);
    let mut m = Mat::zeros(d * d, vech_len(d));
    for j in 0..d {
        for i in 0..d {
            let row = j * d + i; // column-major vec position of (i, j)
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            m.set(row, vech_index(d, hi, lo), 1.0);
        }
    }
    m
}

/// Moore-Penrose inverse `D_d⁺ = (D_dᵀ D_d)⁻¹ D_dᵀ`. Since `D_dᵀ D_d`
/// is diagonal (1 for diagonal positions, 2 for off-diagonal ones) this
/// is formed directly.
pub fn duplication_pinv(d: usize) -> Mat {
    let dup = duplication_matrix(d);
    let mut m = dup.transpose();
    for j in 0..d {
        for i in j..d {
            let row = vech_index(d, i, j);
            let w = if i == j { 1.0 } else { 0.5 };
            for c in 0..d * d {
                let v = m.get(row, c);
                if v != 0.0 {
                    m.set(row, c, v * w);
                }
            }
        }
    }
    m
}

// ── Cholesky ────────────────────────────────────────────────────────

/// Lower-triangular Cholesky factor of an SPD matrix, packed like vech.
#[derive(Debug, Clone)]
pub struct Cholesky {
    d: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn new(a: &SymMat) -> Result<Self> {
        let mut c = Cholesky::placeholder(a.dim());
        c.refactor(a)?;
        Ok(c)
    }

    /// Uninitialized factor storage for [`Cholesky::refactor`].
    pub fn placeholder(d: usize) -> Self {
        Cholesky {
            d,
            l: vec![0.0; vech_len(d)],
        }
    }

    /// Factor `a` in place, reusing the existing storage.
    pub fn refactor(&mut self, a: &SymMat) -> Result<()> {
        let d = a.dim();
        assert_eq!(d, self.d);
        let l = &mut self.l;
        for j in 0..d {
            let mut diag = a.get(j, j);
            for k in 0..j {
                let v = l[vech_index(d, j, k)];
                diag -= v * v;
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "pivot {j} is {diag:e}"
                )));
            }
            let dsqrt = diag.sqrt();
            l[vech_index(d, j, j)] = dsqrt;
            for i in (j + 1)..d {
                let mut v = a.get(i, j);
                for k in 0..j {
                    v -= l[vech_index(d, i, k)] * l[vech_index(d, j, k)];
                }
                l[vech_index(d, i, j)] = v / dsqrt;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    /// log det of the factored matrix.
    pub fn logdet(&self) -> f64 {
        (0..self.d)
            .map(|i| 2.0 * self.l[vech_index(self.d, i, i)].ln())
            .sum()
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let d = self.d;
        assert_eq!(b.len(), d);
        for i in 0..d {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[vech_index(d, i, k)] * b[k];
            }
            b[i] = v / self.l[vech_index(d, i, i)];
        }
        for i in (0..d).rev() {
            let mut v = b[i];
            for k in (i + 1)..d {
                v -= self.l[vech_index(d, k, i)] * b[k];
            }
            b[i] = v / self.l[vech_index(d, i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `bᵀ A⁻¹ b`.
    pub fn inv_quad_form(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        b.iter().zip(&x).map(|(u, v)| u * v).sum()
    }

    pub fn inverse(&self) -> SymMat {
        let d = self.d;
        let mut out = SymMat::zeros(d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.solve_in_place(&mut e);
            for i in j..d {
                out.set(i, j, e[i]);
            }
        }
        out
    }

    /// `L z` for the packed lower factor; maps iid standard normals to
    /// draws with the factored covariance.
    pub fn lower_matvec(&self, z: &[f64]) -> Vec<f64> {
        let d = self.d;
        assert_eq!(z.len(), d);
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += self.l[vech_index(d, i, k)] * z[k];
            }
            y[i] = acc;
        }
        y
    }
}

// ── Spectral decomposition (cyclic Jacobi) ──────────────────────────

/// Eigenvalues (ascending) and orthonormal eigenvector columns of a
/// symmetric matrix.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub values: Vec<f64>,
    /// Eigenvector matrix `U`; column `k` pairs with `values[k]`.
    pub vectors: Mat,
}

impl Spectral {
    /// Assemble `U f(λ) Uᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let d = self.values.len();
        let mut out = SymMat::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.vectors.get(i, k) * f(self.values[k]) * self.vectors.get(j, k);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> SymMat {
        self.apply(|l| l)
    }
}

fn jacobi_eigen(m: &SymMat) -> Result<Spectral> {
    let d = m.dim();
    let mut a = m.to_mat();
    let mut v = Mat::identity(d);
    if d == 1 {
        return Ok(Spectral {
            values: vec![a.get(0, 0)],
            vectors: v,
        });
    }
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a.get(p, q).powi(2);
            }
        }
        if off.sqrt() <= tol {
            // sort ascending, carrying eigenvector columns along
            let mut idx: Vec<usize> = (0..d).collect();
            idx.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
            let values: Vec<f64> = idx.iter().map(|&i| a.get(i, i)).collect();
            let mut vectors = Mat::zeros(d, d);
            for (newc, &oldc) in idx.iter().enumerate() {
                for r in 0..d {
                    vectors.set(r, newc, v.get(r, oldc));
                }
            }
            return Ok(Spectral { values, vectors });
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // rotate rows/columns p and q
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(Error::NoConvergence(
        "Jacobi eigensolver exceeded its sweep budget".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_sym(d: usize, seed: u64) -> SymMat {
        // cheap deterministic fill, good enough for structural tests
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        let mut m = SymMat::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                m.set(i, j, next());
            }
        }
        m
    }

    fn random_spd(d: usize, seed: u64) -> SymMat {
        let g = random_sym(d, seed);
        let mut m = SymMat::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += g.get(i, k) * g.get(j, k);
                }
                m.set(i, j, acc);
            }
        }
        for i in 0..d {
            m.set(i, i, m.get(i, i) + 0.5);
        }
        m
    }

    #[test]
    fn duplication_d1_and_d2_match_forced_layout() {
        let d1 = duplication_matrix(1);
        assert_eq!((d1.rows(), d1.cols()), (1, 1));
        assert_eq!(d1.get(0, 0), 1.0);

        let d2 = duplication_matrix(2);
        let expect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(d2.get(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn duplication_identity_d3_on_random_symmetric() {
        let dup = duplication_matrix(3);
        for seed in 0..100 {
            let a = random_sym(3, seed + 7);
            let lhs = dup.matvec(a.vech());
            let rhs = a.vec_col_major();
            assert_eq!(lhs, rhs, "D_d vech(A) must equal vec(A) exactly");
        }
    }

    #[test]
    fn duplication_pinv_d2_closed_form() {
        let p = duplication_pinv(2);
        let expect = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.5, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(p.get(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn pinv_roundtrip_and_left_inverse() {
        for d in 1..=6 {
            let dup = duplication_matrix(d);
            let pinv = duplication_pinv(d);
            let prod = pinv.matmul(&dup);
            for i in 0..vech_len(d) {
                for j in 0..vech_len(d) {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((prod.get(i, j) - want).abs() < 1e-14);
                }
            }
            let a = random_sym(d, 31 + d as u64);
            let back = pinv.matvec(&a.vec_col_major());
            for (x, y) in back.iter().zip(a.vech()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn vech_unvech_examples() {
        let a = SymMat::from_rows(&[&[1.0, 2.0], &[2.0, 3.0]]).unwrap();
        assert_eq!(vech(&a), vec![1.0, 2.0, 3.0]);
        let b = unvech(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b, a);
        assert!(unvech(&[1.0, 2.0]).is_err());
        assert!(unvec(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn diagonal_and_vecbd_follow_worked_example() {
        // 4x4 with entries 1..16 filled column-major
        let mut m = Mat::zeros(4, 4);
        let mut k = 1.0;
        for j in 0..4 {
            for i in 0..4 {
                m.set(i, j, k);
                k += 1.0;
            }
        }
        assert_eq!(diagonal_of(&m), vec![1.0, 6.0, 11.0, 16.0]);
        assert_eq!(vecbd_of_mat(&m).unwrap(), vec![2.0, 3.0, 4.0, 7.0, 8.0, 12.0]);

        let s = SymMat::from_rows(&[&[1.0, 0.0], &[5.0, 2.0]]).unwrap();
        assert_eq!(s.vecbd().unwrap(), vec![5.0]);
        assert!(SymMat::identity(1).vecbd().is_err());
        assert_eq!(random_sym(5, 3).vecbd().unwrap().len(), 10);
    }

    #[test]
    fn spectral_identity_and_2x2_closed_form() {
        let spec = SymMat::identity(2).spectral().unwrap();
        assert!((spec.values[0] - 1.0).abs() < 1e-14);
        assert!((spec.values[1] - 1.0).abs() < 1e-14);

        // eigenvalues of [[0.53,-0.36],[-0.36,0.92]] from the quadratic formula
        let a = SymMat::from_rows(&[&[0.53, -0.36], &[-0.36, 0.92]]).unwrap();
        let tr: f64 = 0.53 + 0.92;
        let det = 0.53 * 0.92 - 0.36 * 0.36;
        let disc = (tr * tr / 4.0 - det).sqrt();
        let lo = tr / 2.0 - disc;
        let hi = tr / 2.0 + disc;
        let spec = a.spectral().unwrap();
        assert!((spec.values[0] - lo).abs() < 1e-13);
        assert!((spec.values[1] - hi).abs() < 1e-13);
    }

    #[test]
    fn spectral_reconstruction_and_orthonormality() {
        for seed in 0..100 {
            let d = 1 + (seed as usize % 6);
            let a = random_spd(d, seed);
            let spec = a.spectral().unwrap();
            let rec = spec.reconstruct();
            let mut num = 0.0;
            for i in 0..d {
                for j in 0..d {
                    num += (rec.get(i, j) - a.get(i, j)).powi(2);
                }
            }
            assert!(num.sqrt() <= 1e-12 * a.frobenius_norm().max(1.0));
            let u = &spec.vectors;
            let utu = u.transpose().matmul(u);
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((utu.get(i, j) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matrix_log_exp_diagonal_cases() {
        let z = SymMat::identity(3).matrix_log().unwrap();
        assert!(z.vech().iter().all(|&v| v.abs() < 1e-14));

        let a = SymMat::from_rows(&[&[(2.0f64).exp().powi(1), 0.0], &[0.0, 1.0]]).unwrap();
        let mut e2 = SymMat::zeros(2);
        e2.set(0, 0, std::f64::consts::E * std::f64::consts::E);
        e2.set(1, 1, 1.0);
        let l = e2.matrix_log().unwrap();
        assert!((l.get(0, 0) - 2.0).abs() < 1e-12);
        assert!(l.get(1, 1).abs() < 1e-12);
        assert!(l.get(1, 0).abs() < 1e-12);
        let _ = a;
    }

    #[test]
    fn matrix_log_rejects_non_spd() {
        let a = SymMat::from_rows(&[&[1.0, 0.0], &[0.0, -0.5]]).unwrap();
        assert!(a.matrix_log().is_err());
    }

    #[test]
    fn cholesky_solve_and_logdet() {
        let a = random_spd(4, 99);
        let c = a.cholesky().unwrap();
        let x_true = vec![1.0, -2.0, 0.5, 3.0];
        let b = a.matvec(&x_true);
        let x = c.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
        let spec = a.spectral().unwrap();
        let ld: f64 = spec.values.iter().map(|l| l.ln()).sum();
        assert!((c.logdet() - ld).abs() < 1e-10);

        let inv = c.inverse();
        let prod = a.to_mat().matmul(&inv.to_mat());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - want).abs() < 1e-10);
            }
        }
        assert!(SymMat::from_rows(&[&[0.0]]).unwrap().cholesky().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn vech_roundtrip_exact(d in 1usize..=5, seed in 0u64..1000) {
            let a = random_sym(d, seed);
            let back = unvech(&vech(&a)).unwrap();
            prop_assert_eq!(back, a.clone());
            let viavec = unvec(&a.vec_col_major(), d).unwrap();
            prop_assert_eq!(viavec, a);
        }

        #[test]
        fn log_exp_roundtrip_spd(d in 1usize..=5, seed in 0u64..500) {
            let a = random_spd(d, seed);
            let back = a.matrix_log().unwrap().matrix_exp().unwrap();
            let mut num = 0.0;
            for i in 0..d {
                for j in 0..d {
                    num += (back.get(i, j) - a.get(i, j)).powi(2);
                }
            }
            prop_assert!(num.sqrt() <= 1e-10 * a.frobenius_norm());
        }
    }
}
