//! Dense kernels for small square real matrices.
//!
//! Everything here is written for dimensions in the single digits: the
//! algorithms are the classical dense ones (scaled Padé exponential,
//! Hessenberg + shifted QR eigenvalues, power iteration, partial-pivot
//! elimination) with no blocking or allocation tricks. All accuracy and
//! iteration budgets live in [`tolerances`] so tests can reference the same
//! numbers the kernels use.

use num_complex::Complex64;
use thiserror::Error;

pub type ComplexScalar = Complex64;

/// Accuracy targets and iteration budgets for every kernel in this module.
pub mod tolerances {
    /// Relative accuracy of the exponential for inputs with norm up to ~50.
    pub const EXP_REL: f64 = 1e-12;
    /// `exp(log(M))` must reproduce `M` to this relative accuracy.
    pub const LOG_ROUNDTRIP_REL: f64 = 1e-10;
    /// Subdiagonal deflation threshold of the shifted-QR iteration.
    pub const QR_DEFLATION: f64 = 1e-13;
    /// Total QR sweep budget before the iteration reports failure.
    pub const QR_MAX_SWEEPS: usize = 10_000;
    /// Stagnation threshold (relative, on the squared spectral norm) that
    /// stops the power iteration.
    pub const POWER_STAGNATION: f64 = 1e-13;
    pub const POWER_MAX_ITERS: usize = 10_000;
    /// Pivots below `PIVOT_REL * max|entry|` are treated as singular.
    pub const PIVOT_REL: f64 = 1e-13;
    /// Largest eigenvector-basis condition number accepted by the
    /// diagonalizing logarithm path before falling back to square roots.
    pub const LOG_EIGBASIS_COND_MAX: f64 = 1e8;
}

#[derive(Debug, Error)]
pub enum MatError {
    #[error("matrix dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is numerically singular (pivot {pivot:.3e}, threshold {threshold:.3e})")]
    Singular { pivot: f64, threshold: f64 },
    #[error("no principal logarithm: eigenvalue {0} lies on the closed negative real axis")]
    NoPrincipalLog(String),
    #[error("matrix exponential overflowed f64 range")]
    ExpOverflow,
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("{0} did not converge within its iteration budget")]
    NoConvergence(&'static str),
}

/// Square real matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != n * n {
            return Err(MatError::Dimension(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Matrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(MatError::Dimension(format!(
                    "row of length {} in a {n}x{n} matrix",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length does not match matrix dimension");
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.n {
            let mut s = 0.0;
            for i in 0..self.n {
                s += self[(i, j)].abs();
            }
            best = best.max(s);
        }
        best
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

macro_rules! entrywise_op {
    ($trait:ident, $fn:ident, $op:tt) => {
        impl std::ops::$trait<&Matrix> for &Matrix {
            type Output = Matrix;
            fn $fn(self, rhs: &Matrix) -> Matrix {
                assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
                Matrix {
                    n: self.n,
                    data: self
                        .data
                        .iter()
                        .zip(rhs.data.iter())
                        .map(|(a, b)| a $op b)
                        .collect(),
                }
            }
        }
    };
}

entrywise_op!(Add, add, +);
entrywise_op!(Sub, sub, -);

impl std::ops::Mul<&Matrix> for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// Integer matrix power by repeated squaring.
pub fn mat_powi(m: &Matrix, mut k: u64) -> Matrix {
    let mut base = m.clone();
    let mut acc = Matrix::identity(m.dim());
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Exponential
// ---------------------------------------------------------------------------

/// Matrix exponential by scaling and squaring around a degree-13 Padé kernel.
pub fn mat_exp(m: &Matrix) -> Result<Matrix, MatError> {
    if !m.is_finite() {
        return Err(MatError::NonFinite);
    }
    const THETA_13: f64 = 5.371_920_351_148_152;
    #[rustfmt::skip]
    const B: [f64; 14] = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ];

    let n = m.dim();
    let norm = m.norm_1();
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let a = m.scale(0.5f64.powi(s as i32));

    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id = Matrix::identity(n);

    // u = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let w1 = &(&a6.scale(B[13]) + &a4.scale(B[11])) + &a2.scale(B[9]);
    let w2 = &(&(&a6 * &w1) + &a6.scale(B[7])) + &(&a4.scale(B[5]) + &a2.scale(B[3]));
    let u = &a * &(&w2 + &id.scale(B[1]));
    // v = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let z1 = &(&a6.scale(B[12]) + &a4.scale(B[10])) + &a2.scale(B[8]);
    let v = &(&(&a6 * &z1) + &a6.scale(B[6])) + &(&(&a4.scale(B[4]) + &a2.scale(B[2])) + &id.scale(B[0]));

    let denom = &v - &u;
    let numer = &v + &u;
    let mut e = solve_matrix(&denom, &numer)?;
    for _ in 0..s {
        e = &e * &e;
    }
    if !e.is_finite() {
        return Err(MatError::ExpOverflow);
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Linear solves, inverse, determinant
// ---------------------------------------------------------------------------

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
fn solve_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix, MatError> {
    let n = a.dim();
    assert_eq!(b.dim(), n, "matrix dimension mismatch");
    let threshold = tolerances::PIVOT_REL * a.max_abs();
    let mut lhs = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lhs[(col, col)].abs();
        for r in col + 1..n {
            let v = lhs[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= threshold || pivot_val == 0.0 {
            return Err(MatError::Singular { pivot: pivot_val, threshold });
        }
        if pivot_row != col {
            for j in 0..n {
                lhs.data.swap(col * n + j, pivot_row * n + j);
                rhs.data.swap(col * n + j, pivot_row * n + j);
            }
        }
        let p = lhs[(col, col)];
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = lhs[(r, col)] / p;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                lhs[(r, j)] -= factor * lhs[(col, j)];
            }
            for j in 0..n {
                rhs[(r, j)] -= factor * rhs[(col, j)];
            }
        }
    }
    for i in 0..n {
        let p = lhs[(i, i)];
        for j in 0..n {
            rhs[(i, j)] /= p;
        }
    }
    Ok(rhs)
}

/// Matrix inverse; fails when a pivot falls below the relative threshold.
pub fn inverse(m: &Matrix) -> Result<Matrix, MatError> {
    if !m.is_finite() {
        return Err(MatError::NonFinite);
    }
    solve_matrix(m, &Matrix::identity(m.dim()))
}

/// Determinant via LU with partial pivoting. Near-singular inputs return a
/// value close to zero rather than an error.
pub fn determinant(m: &Matrix) -> f64 {
    let n = m.dim();
    let mut lu = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu[(col, col)].abs();
        for r in col + 1..n {
            let v = lu[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val == 0.0 {
            return 0.0;
        }
        if pivot_row != col {
            for j in 0..n {
                lu.data.swap(col * n + j, pivot_row * n + j);
            }
            det = -det;
        }
        let p = lu[(col, col)];
        det *= p;
        for r in col + 1..n {
            let factor = lu[(r, col)] / p;
            for j in col..n {
                lu[(r, j)] -= factor * lu[(col, j)];
            }
        }
    }
    det
}

// ---------------------------------------------------------------------------
// Spectral norm
// ---------------------------------------------------------------------------

/// Largest singular value via power iteration on `MᵀM`.
pub fn spectral_norm(m: &Matrix) -> Result<f64, MatError> {
    if !m.is_finite() {
        return Err(MatError::NonFinite);
    }
    let n = m.dim();
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let b = &m.transpose() * m;
    // Deterministic start with unequal components so no eigenvector of a
    // small structured matrix is hit exactly orthogonally.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
    normalize(&mut v);
    let mut prev = 0.0f64;
    for iter in 0..tolerances::POWER_MAX_ITERS {
        let w = b.mul_vec(&v);
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wn == 0.0 {
            // v happens to lie in the kernel; restart from a basis vector.
            v = vec![0.0; n];
            v[iter % n] = 1.0;
            continue;
        }
        v = w;
        normalize(&mut v);
        if iter > 0 && (rayleigh - prev).abs() <= tolerances::POWER_STAGNATION * rayleigh.abs() {
            return Ok(rayleigh.max(0.0).sqrt());
        }
        prev = rayleigh;
    }
    Ok(prev.max(0.0).sqrt())
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Euclidean norm of a real vector.
pub fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Eigenvalues
// ---------------------------------------------------------------------------

/// All eigenvalues, with multiplicity, in an unspecified order.
///
/// Dimensions 1 and 2 use closed forms; larger matrices go through a
/// Householder Hessenberg reduction followed by Francis double-shift QR.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<ComplexScalar>, MatError> {
    if !m.is_finite() {
        return Err(MatError::NonFinite);
    }
    match m.dim() {
        0 => Ok(vec![]),
        1 => Ok(vec![Complex64::new(m[(0, 0)], 0.0)]),
        2 => Ok(eig2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]).to_vec()),
        _ => {
            let mut h = m.clone();
            hessenberg_in_place(&mut h);
            hqr_eigenvalues(h)
        }
    }
}

/// Eigenvalues of `[[a, b], [c, d]]` in a numerically stable closed form.
fn eig2(a: f64, b: f64, c: f64, d: f64) -> [ComplexScalar; 2] {
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        // Add the root to the same-signed term to avoid cancellation.
        let l1 = if half_tr >= 0.0 { half_tr + root } else { half_tr - root };
        let l2 = if l1 != 0.0 { det / l1 } else { half_tr - root.copysign(half_tr) };
        [Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
    }
}

/// Householder similarity reduction to upper Hessenberg form.
fn hessenberg_in_place(h: &mut Matrix) {
    let n = h.dim();
    for k in 0..n.saturating_sub(2) {
        let mut col_norm = 0.0f64;
        for i in k + 1..n {
            col_norm = col_norm.hypot(h[(i, k)]);
        }
        if col_norm == 0.0 {
            continue;
        }
        let alpha = if h[(k + 1, k)] >= 0.0 { -col_norm } else { col_norm };
        let mut v = vec![0.0; n];
        v[k + 1] = h[(k + 1, k)] - alpha;
        for i in k + 2..n {
            v[i] = h[(i, k)];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H <- (I - 2vvᵀ/vᵀv) H (I - 2vvᵀ/vᵀv)
        for j in 0..n {
            let dot: f64 = (k + 1..n).map(|i| v[i] * h[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k + 1..n {
                h[(i, j)] -= f * v[i];
            }
        }
        for i in 0..n {
            let dot: f64 = (k + 1..n).map(|j| v[j] * h[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for j in k + 1..n {
                h[(i, j)] -= f * v[j];
            }
        }
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
        h[(k + 1, k)] = alpha;
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, eigenvalues only.
fn hqr_eigenvalues(mut h: Matrix) -> Result<Vec<ComplexScalar>, MatError> {
    let n = h.dim();
    let mut eigs: Vec<ComplexScalar> = Vec::with_capacity(n);
    let anorm = h.max_abs().max(1e-300);
    let tol = tolerances::QR_DEFLATION;
    let mut total_sweeps = 0usize;
    let mut t_shift = 0.0f64;

    let mut hi = n as isize - 1;
    while hi >= 0 {
        let nn = hi as usize;
        let mut its = 0usize;
        loop {
            // Look for a negligible subdiagonal entry.
            let mut l = nn;
            while l >= 1 {
                let s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if h[(l, l - 1)].abs() <= tol * s {
                    h[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let x = h[(nn, nn)];
            if l == nn {
                eigs.push(Complex64::new(x + t_shift, 0.0));
                hi -= 1;
                break;
            }
            let y = h[(nn - 1, nn - 1)];
            let w = h[(nn, nn - 1)] * h[(nn - 1, nn)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                let x = x + t_shift;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    let l1 = x + z;
                    let l2 = if z != 0.0 { x - w / z } else { x + z };
                    eigs.push(Complex64::new(l1, 0.0));
                    eigs.push(Complex64::new(l2, 0.0));
                } else {
                    eigs.push(Complex64::new(x + p, z));
                    eigs.push(Complex64::new(x + p, -z));
                }
                hi -= 2;
                break;
            }
            if total_sweeps >= tolerances::QR_MAX_SWEEPS {
                return Err(MatError::NoConvergence("shifted QR eigenvalue iteration"));
            }
            total_sweeps += 1;
            its += 1;
            let (mut x, mut y, mut w) = (x, y, w);
            if its % 10 == 0 {
                // Exceptional shift to break stagnation cycles.
                t_shift += x;
                for i in 0..=nn {
                    h[(i, i)] -= x;
                }
                let s = h[(nn, nn - 1)].abs() + h[(nn - 1, nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            // Choose the starting row of the implicit double-shift bulge.
            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = h[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - rr - ss;
                r = h[(m + 2, m + 1)];
                let scale = p.abs() + q.abs() + r.abs();
                p /= scale;
                q /= scale;
                r /= scale;
                if m == l {
                    break;
                }
                let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                if u <= tol * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                h[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            // Chase the bulge down the active block.
            for k in m..nn {
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if k != nn - 1 { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                } else {
                    h[(k, k - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                    if k != nn - 1 {
                        pp += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= pp * z;
                    }
                    h[(k + 1, j)] -= pp * y;
                    h[(k, j)] -= pp * x;
                }
                let mmin = nn.min(k + 3);
                for i in l..=mmin {
                    let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
                    if k != nn - 1 {
                        pp += z * h[(i, k + 2)];
                        h[(i, k + 2)] -= pp * r;
                    }
                    h[(i, k + 1)] -= pp * q;
                    h[(i, k)] -= pp;
                }
            }
        }
    }
    Ok(eigs)
}

// ---------------------------------------------------------------------------
// Principal logarithm
// ---------------------------------------------------------------------------

/// Principal matrix logarithm.
///
/// Rejects matrices with an eigenvalue on the closed negative real axis.
/// Diagonalizable inputs go through a complex eigendecomposition; when the
/// eigenvector basis is ill-conditioned the routine falls back to inverse
/// scaling and squaring (repeated square roots plus an `atanh` series). Both
/// paths verify `exp(log M) = M` before returning.
pub fn mat_log_principal(m: &Matrix) -> Result<Matrix, MatError> {
    if !m.is_finite() {
        return Err(MatError::NonFinite);
    }
    let n = m.dim();
    let scale = m.max_abs();
    if scale == 0.0 {
        return Err(MatError::NoPrincipalLog("0".to_string()));
    }

    // Scalar multiples of the identity come up constantly (scalar jump maps)
    // and deserve an exact answer.
    if let Some(alpha) = scalar_multiple_of_identity(m) {
        if alpha <= 0.0 {
            return Err(MatError::NoPrincipalLog(format!("{alpha}")));
        }
        return Ok(Matrix::identity(n).scale(alpha.ln()));
    }

    let eigs = eigenvalues(m)?;
    for lam in &eigs {
        if lam.norm() <= 1e-12 * scale {
            return Err(MatError::NoPrincipalLog(format!("{lam}")));
        }
        if lam.re < 0.0 && lam.im.abs() <= 1e-12 * scale {
            return Err(MatError::NoPrincipalLog(format!("{lam}")));
        }
    }

    if let Some(log) = try_eigen_log(m, &eigs) {
        if log_roundtrip_ok(m, &log) {
            return Ok(log);
        }
    }
    let log = iss_log(m)?;
    if log_roundtrip_ok(m, &log) {
        Ok(log)
    } else {
        Err(MatError::NoConvergence("inverse scaling-and-squaring logarithm"))
    }
}

fn scalar_multiple_of_identity(m: &Matrix) -> Option<f64> {
    let n = m.dim();
    let scale = m.max_abs();
    let tol = 1e-14 * scale;
    let alpha = m[(0, 0)];
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { alpha } else { 0.0 };
            if (m[(i, j)] - want).abs() > tol {
                return None;
            }
        }
    }
    Some(alpha)
}

fn log_roundtrip_ok(m: &Matrix, log: &Matrix) -> bool {
    match mat_exp(log) {
        Ok(e) => (&e - m).norm_1() <= tolerances::LOG_ROUNDTRIP_REL * m.norm_1().max(1.0),
        Err(_) => false,
    }
}

/// Diagonalizing path: inverse-iteration eigenvectors, complex solve.
fn try_eigen_log(m: &Matrix, eigs: &[ComplexScalar]) -> Option<Matrix> {
    let n = m.dim();
    let shift_eps = 1e-10 * m.max_abs().max(1.0);
    let mut v = CMatrix::zeros(n);
    for (col, lam) in eigs.iter().enumerate() {
        let shifted = lam + Complex64::new(shift_eps, shift_eps);
        let mut a = CMatrix::from_real(m);
        for i in 0..n {
            a.data[i * n + i] -= shifted;
        }
        let lu = a.lu()?;
        let mut vec: Vec<Complex64> =
            (0..n).map(|i| Complex64::new(1.0 / (i + 1) as f64, 0.3)).collect();
        cnormalize(&mut vec);
        for _ in 0..3 {
            vec = lu.solve(&vec)?;
            cnormalize(&mut vec);
        }
        for i in 0..n {
            v.data[i * n + col] = vec[i];
        }
    }
    let v_inv = v.inverse()?;
    if v.norm_1() * v_inv.norm_1() > tolerances::LOG_EIGBASIS_COND_MAX {
        return None;
    }
    // log M = V log(Λ) V⁻¹
    let mut mid = CMatrix::zeros(n);
    for (i, lam) in eigs.iter().enumerate() {
        mid.data[i * n + i] = lam.ln();
    }
    let log_c = v.mul(&mid).mul(&v_inv);
    let mut log = Matrix::zeros(n);
    let mut imag_max = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            log[(i, j)] = log_c.data[i * n + j].re;
            imag_max = imag_max.max(log_c.data[i * n + j].im.abs());
        }
    }
    if imag_max > 1e-7 * (1.0 + log.max_abs()) {
        return None;
    }
    Some(log)
}

/// Inverse scaling and squaring: square-root until close to the identity,
/// then evaluate `log` through the Gregory (atanh) series.
fn iss_log(m: &Matrix) -> Result<Matrix, MatError> {
    let n = m.dim();
    let id = Matrix::identity(n);
    let mut y = m.clone();
    let mut k = 0u32;
    while (&y - &id).norm_1() > 0.3 {
        y = sqrtm_db(&y)?;
        k += 1;
        if k > 60 {
            return Err(MatError::NoConvergence("inverse scaling of the logarithm"));
        }
    }
    let w = &(&y - &id) * &inverse(&(&y + &id))?;
    let w2 = &w * &w;
    let mut term = w.clone();
    let mut acc = w.clone();
    for j in 1..200 {
        term = &term * &w2;
        let add = term.scale(1.0 / (2 * j + 1) as f64);
        acc = &acc + &add;
        if add.norm_1() <= 1e-17 * acc.norm_1().max(1e-300) {
            break;
        }
    }
    Ok(acc.scale(2.0f64.powi(k as i32 + 1)))
}

/// Denman–Beavers iteration for the principal square root.
fn sqrtm_db(m: &Matrix) -> Result<Matrix, MatError> {
    let mut p = m.clone();
    let mut q = Matrix::identity(m.dim());
    for _ in 0..100 {
        let p_inv = inverse(&p)?;
        let q_inv = inverse(&q)?;
        let p_next = (&p + &q_inv).scale(0.5);
        let q_next = (&q + &p_inv).scale(0.5);
        let delta = (&p_next - &p).norm_1();
        p = p_next;
        q = q_next;
        if delta <= 1e-14 * p.norm_1() {
            return Ok(p);
        }
    }
    Err(MatError::NoConvergence("Denman-Beavers square root"))
}

// ---------------------------------------------------------------------------
// Complex helpers (internal)
// ---------------------------------------------------------------------------

struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

struct CLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl CMatrix {
    fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    fn from_real(m: &Matrix) -> Self {
        CMatrix {
            n: m.dim(),
            data: m.data().iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    fn mul(&self, rhs: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    fn norm_1(&self) -> f64 {
        let n = self.n;
        let mut best = 0.0f64;
        for j in 0..n {
            let s: f64 = (0..n).map(|i| self.data[i * n + j].norm()).sum();
            best = best.max(s);
        }
        best
    }

    fn lu(&self) -> Option<CLu> {
        let n = self.n;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = lu[col * n + col].norm();
            for r in col + 1..n {
                let v = lu[r * n + col].norm();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val == 0.0 || !pivot_val.is_finite() {
                // Inverse iteration wants near-singular systems to still
                // factor; a hard zero gets nudged to a representable floor.
                lu[col * n + col] = Complex64::new(1e-300, 0.0);
            } else if pivot_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let p = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / p;
                lu[r * n + col] = factor;
                for j in col + 1..n {
                    let sub = factor * lu[col * n + j];
                    lu[r * n + j] -= sub;
                }
            }
        }
        Some(CLu { n, lu, perm })
    }

    fn inverse(&self) -> Option<CMatrix> {
        let n = self.n;
        let lu = self.lu()?;
        let mut out = CMatrix::zeros(n);
        for col in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[col] = Complex64::new(1.0, 0.0);
            let x = lu.solve(&e)?;
            if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return None;
            }
            for i in 0..n {
                out.data[i * n + col] = x[i];
            }
        }
        Some(out)
    }
}

impl CLu {
    fn solve(&self, b: &[Complex64]) -> Option<Vec<Complex64>> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                let sub = self.lu[i * n + j] * x[j];
                x[i] -= sub;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let sub = self.lu[i * n + j] * x[j];
                x[i] -= sub;
            }
            x[i] /= self.lu[i * n + i];
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return None;
        }
        Some(x)
    }
}

fn cnormalize(v: &mut [Complex64]) {
    let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}
