//! Dense linear algebra for square matrices: Householder QR with exact
//! determinant-sign tracking, LU with partial pivoting, and two symmetric
//! eigensolvers (Householder tridiagonalization + implicit-shift QL for the
//! sampling hot path, cyclic Jacobi with eigenvectors for small-dimension
//! cross checks).
//!
//! Storage is column-major so that the reflector loops run over contiguous
//! memory. Dimensions here stay in the hundreds, everything is f64.

/// Square matrix, column-major: entry (i, j) lives at `data[j * n + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            for i in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self.get(j, i))
    }

    /// Symmetric part (A + A^T) / 2.
    pub fn symmetric_part(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for j in 0..n {
            for k in 0..n {
                let b = other.get(k, j);
                if b == 0.0 {
                    continue;
                }
                let a_col = self.col(k);
                let out_col = out.col_mut(j);
                for i in 0..n {
                    out_col[i] += a_col[i] * b;
                }
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Largest |A_ij - I_ij|, the orthogonality defect measure used by tests.
    pub fn max_deviation_from_identity(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            for i in 0..self.n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.get(i, j) - target).abs());
            }
        }
        worst
    }
}

/// Result of a Householder QR factorization A = Q R.
///
/// `q_det_sign` is exact: each applied reflector contributes det -1, so the
/// sign is a counted parity, not a floating-point byproduct.
pub struct QrFactors {
    pub q: Matrix,
    pub r_diag: Vec<f64>,
    pub q_det_sign: f64,
}

/// Householder QR of a square matrix, returning the orthogonal factor, the
/// diagonal of R, and the exactly-tracked sign of det Q.
#[allow(clippy::needless_range_loop)]
pub fn householder_qr(a: &Matrix) -> QrFactors {
    let n = a.dim();
    let mut qr = a.clone();
    let mut r_diag = vec![0.0; n];
    let mut reflections = 0usize;

    let mut vk = vec![0.0f64; n];
    for k in 0..n {
        let mut nrm = {
            let col = &qr.col(k)[k..];
            col.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        if nrm == 0.0 {
            r_diag[k] = 0.0;
            continue;
        }
        if qr.get(k, k) < 0.0 {
            nrm = -nrm;
        }
        // Column k now holds the (scaled) Householder vector v with v_k >= 1.
        for v in &mut qr.col_mut(k)[k..] {
            *v /= nrm;
        }
        *qr.col_mut(k).get_mut(k).unwrap() += 1.0;
        reflections += 1;

        let vkk = qr.get(k, k);
        vk.clear();
        vk.extend_from_slice(&qr.col(k)[k..]);
        for j in (k + 1)..n {
            let mut s = 0.0;
            for (x, y) in vk.iter().zip(&qr.col(j)[k..]) {
                s += x * y;
            }
            s = -s / vkk;
            for (y, x) in qr.col_mut(j)[k..].iter_mut().zip(&vk) {
                *y += s * x;
            }
        }
        r_diag[k] = -nrm;
    }

    // Accumulate Q by applying the stored reflectors to the identity.
    let mut q = Matrix::zeros(n);
    for k in (0..n).rev() {
        q.set(k, k, 1.0);
        let vkk = qr.get(k, k);
        if vkk == 0.0 {
            continue;
        }
        let vk: Vec<f64> = qr.col(k)[k..].to_vec();
        for j in k..n {
            let mut s = 0.0;
            for (x, y) in vk.iter().zip(&q.col(j)[k..]) {
                s += x * y;
            }
            s = -s / vkk;
            for (y, x) in q.col_mut(j)[k..].iter_mut().zip(&vk) {
                *y += s * x;
            }
        }
    }

    let q_det_sign = if reflections.is_multiple_of(2) { 1.0 } else { -1.0 };
    QrFactors { q, r_diag, q_det_sign }
}

/// LU factorization with partial pivoting.
pub struct Lu {
    lu: Matrix,
    piv: Vec<usize>,
    piv_sign: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("matrix is singular to working precision (zero pivot at column {column})")]
pub struct SingularMatrix {
    pub column: usize,
}

impl Lu {
    pub fn decompose(a: &Matrix) -> Result<Lu, SingularMatrix> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let mut piv_sign = 1.0;

        for k in 0..n {
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for i in (k + 1)..n {
                let v = lu.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(SingularMatrix { column: k });
            }
            if p != k {
                for j in 0..n {
                    let t = lu.get(p, j);
                    lu.set(p, j, lu.get(k, j));
                    lu.set(k, j, t);
                }
                piv.swap(p, k);
                piv_sign = -piv_sign;
            }
            let pivot = lu.get(k, k);
            for i in (k + 1)..n {
                let m = lu.get(i, k) / pivot;
                lu.set(i, k, m);
                if m != 0.0 {
                    for j in (k + 1)..n {
                        let v = lu.get(i, j) - m * lu.get(k, j);
                        lu.set(i, j, v);
                    }
                }
            }
        }
        Ok(Lu { lu, piv, piv_sign })
    }

    pub fn det(&self) -> f64 {
        let mut d = self.piv_sign;
        for i in 0..self.lu.dim() {
            d *= self.lu.get(i, i);
        }
        d
    }

    /// Solves A x = b, overwriting `b` with x.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.lu.dim();
        assert_eq!(b.len(), n);
        let permuted: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&permuted);
        for k in 0..n {
            for i in (k + 1)..n {
                b[i] -= self.lu.get(i, k) * b[k];
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.lu.get(k, k);
            for i in 0..k {
                b[i] -= self.lu.get(i, k) * b[k];
            }
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending. Householder tridiagonal
/// reduction followed by implicit-shift QL; no eigenvectors, which keeps the
/// per-sample cost low on the sampling hot path.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.dim();
    if n == 0 {
        return Vec::new();
    }
    let (mut d, mut e) = tridiagonalize(a);
    tql_implicit(&mut d, &mut e);
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    d
}

/// Householder reduction of a symmetric matrix to tridiagonal form,
/// eigenvalues-only variant (no accumulation of the transformation).
/// Returns (diagonal, subdiagonal) with the subdiagonal in e[1..].
#[allow(clippy::needless_range_loop)]
fn tridiagonalize(a: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let mut m = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += m.get(i, k).abs();
            }
            if scale == 0.0 {
                e[i] = m.get(i, l);
            } else {
                for k in 0..=l {
                    let v = m.get(i, k) / scale;
                    m.set(i, k, v);
                    h += v * v;
                }
                let f = m.get(i, l);
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                m.set(i, l, f - g);
                let mut f_acc = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += m.get(j, k) * m.get(i, k);
                    }
                    for k in (j + 1)..=l {
                        g += m.get(k, j) * m.get(i, k);
                    }
                    e[j] = g / h;
                    f_acc += e[j] * m.get(i, j);
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = m.get(i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let v = m.get(j, k) - (f * e[k] + g * m.get(i, k));
                        m.set(j, k, v);
                    }
                }
            }
        } else {
            e[i] = m.get(i, l);
        }
        d[i] = h;
    }

    for i in 0..n {
        d[i] = m.get(i, i);
    }
    (d, e)
}

/// Implicit-shift QL iteration on a tridiagonal matrix; eigenvalues land in d.
fn tql_implicit(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    if n <= 1 {
        return;
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 50, "QL iteration failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m as isize - 1;
            while i >= l as isize {
                let iu = i as usize;
                let f = s * e[iu];
                let b = c * e[iu];
                r = f.hypot(g);
                e[iu + 1] = r;
                if r == 0.0 {
                    d[iu + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[iu + 1] - p;
                r = (d[iu] - g) * s + 2.0 * c * b;
                p = s * r;
                d[iu + 1] = g + p;
                g = c * r - b;
                i -= 1;
            }
            if r == 0.0 && i >= l as isize {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, with eigenvectors.
/// Quadratically convergent and simple; used for small dimensions and as the
/// independent cross check of `symmetric_eigenvalues`.
/// Returns (eigenvalues ascending, eigenvector columns in matching order).
pub fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    const MAX_SWEEPS: usize = 50;
    let n = a.dim();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);

    let frob_sq: f64 = (0..n).map(|j| m.col(j).iter().map(|v| v * v).sum::<f64>()).sum();
    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..j {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off <= 1e-30 * frob_sq {
            break;
        }
        assert!(sweep + 1 < MAX_SWEEPS, "Jacobi failed to converge");
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).partial_cmp(&m.get(j, j)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, |i, j| v.get(i, order[j]));
    (values, vectors)
}
