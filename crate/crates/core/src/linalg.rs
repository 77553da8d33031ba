//! Sparse/banded Hermitian kernels and thin wrappers over nalgebra's dense solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Compressed sparse row matrix with complex entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<C64>,
}

impl CsrMatrix {
    /// Duplicate (row, col) entries are summed.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, C64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<C64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
                continue;
            }
            col.push(j);
            val.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col, val }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col[p], self.val[p]))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.row(i).find(|&(c, _)| c == j).map_or(C64::new(0.0, 0.0), |(_, v)| v)
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for i in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[p] * x[self.col[p]];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j))).max().unwrap_or(0)
    }

    /// max |A_ij - conj(A_ji)| / max |A_ij|
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                scale = scale.max(v.norm());
                worst = worst.max((v - self.get(j, i).conj()).norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn diagonal(d: &[C64]) -> CsrMatrix {
        CsrMatrix::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix::diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn adjoint(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.push((j, i, v.conj()));
            }
        }
        CsrMatrix::from_triplets(self.n, t)
    }

    pub fn scaled(&self, s: C64) -> CsrMatrix {
        CsrMatrix { val: self.val.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// Σ c_k A_k over matrices of equal size.
    pub fn linear_combination(terms: &[(C64, &CsrMatrix)]) -> CsrMatrix {
        let n = terms.first().map_or(0, |t| t.1.n);
        let mut t = Vec::new();
        for (c, m) in terms {
            for i in 0..m.n {
                for (j, v) in m.row(i) {
                    t.push((i, j, c * v));
                }
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    pub fn matmul(&self, b: &CsrMatrix) -> CsrMatrix {
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut acc = vec![C64::new(0.0, 0.0); b.n];
        let mut seen = vec![false; b.n];
        let mut touched = Vec::new();
        for i in 0..self.n {
            for (k, a) in self.row(i) {
                for (j, v) in b.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * v;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col.push(j);
                val.push(acc[j]);
                acc[j] = C64::new(0.0, 0.0);
                seen[j] = false;
            }
            touched.clear();
            row_ptr[i + 1] = col.len();
        }
        CsrMatrix { n: self.n, row_ptr, col, val }
    }

    /// AB − BA
    pub fn commutator(&self, b: &CsrMatrix) -> CsrMatrix {
        CsrMatrix::linear_combination(&[(C64::new(1.0, 0.0), &self.matmul(b)), (C64::new(-1.0, 0.0), &b.matmul(self))])
    }

    /// Largest |entry| over rows and columns where `keep` holds.
    pub fn max_abs_restricted(&self, keep: &[bool]) -> f64 {
        let mut m = 0.0f64;
        for i in (0..self.n).filter(|&i| keep[i]) {
            for (j, v) in self.row(i) {
                if keep[j] {
                    m = m.max(v.norm());
                }
            }
        }
        m
    }

    /// P A P^T for the permutation `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.push((perm[i], perm[j], v));
            }
        }
        CsrMatrix::from_triplets(self.n, t)
    }
}

/// Banded LDL^H factorisation of A - σI without pivoting.
pub struct BandedLdl {
    n: usize,
    b: usize,
    // row i holds L[i][i-b..i] in slots 0..b
    l: Vec<C64>,
    d: Vec<f64>,
}

impl BandedLdl {
    /// Fails with `None` when a pivot is tiny relative to the matrix scale.
    pub fn factor(a: &CsrMatrix, sigma: f64) -> Option<BandedLdl> {
        let n = a.n;
        let b = a.bandwidth();
        let mut l = vec![C64::new(0.0, 0.0); n * b.max(1)];
        let mut d = vec![0.0; n];
        let scale = a.norm_inf().max(sigma.abs()).max(1e-300);
        let mut row = vec![C64::new(0.0, 0.0); b + 1];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for v in row.iter_mut() {
                *v = C64::new(0.0, 0.0);
            }
            let mut aii = 0.0;
            for (j, v) in a.row(i) {
                if j < i {
                    row[j + b - i] = v;
                } else if j == i {
                    aii = v.re - sigma;
                }
            }
            // left-looking: w_j = l_ij d_j
            for j in lo..i {
                let mut s = row[j + b - i];
                let klo = lo.max(j.saturating_sub(b));
                let lj = &l[j * b..(j + 1) * b];
                for k in klo..j {
                    // l_ik d_k conj(l_jk); stored row entries hold l_ik d_k before division
                    s -= row[k + b - i] * lj[k + b - j].conj();
                }
                row[j + b - i] = s;
            }
            let li = &mut l[i * b..(i + 1) * b];
            let mut di = aii;
            for j in lo..i {
                let w = row[j + b - i];
                let lij = w / d[j];
                li[j + b - i] = lij;
                di -= (w * lij.conj()).re;
            }
            if !di.is_finite() || di.abs() < 1e-13 * scale {
                return None;
            }
            d[i] = di;
        }
        Some(BandedLdl { n, b, l, d })
    }

    /// Number of eigenvalues of A below σ (Sylvester inertia).
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn solve_in_place(&self, x: &mut [C64]) {
        let (n, b) = (self.n, self.b);
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let li = &self.l[i * b..(i + 1) * b];
            let mut s = x[i];
            for j in lo..i {
                s -= li[j + b - i] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let xi = x[i];
            let lo = i.saturating_sub(b);
            let li = &self.l[i * b..(i + 1) * b];
            for j in lo..i {
                x[j] -= li[j + b - i].conj() * xi;
            }
        }
    }
}

/// Factor at σ, nudging σ when a pivot collapses. Returns the shift actually used.
pub fn factor_near(a: &CsrMatrix, sigma: f64) -> Result<(BandedLdl, f64)> {
    let scale = a.norm_inf().max(1.0);
    let mut s = sigma;
    for k in 0..8 {
        if let Some(f) = BandedLdl::factor(a, s) {
            return Ok((f, s));
        }
        s = sigma + scale * 1e-9 * (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 };
    }
    Err(Error::NoConvergence { iterations: 8, converged: 0, wanted: 1, residual: f64::NAN })
}

/// #{eigenvalues < σ}, exact up to the pivot nudge of `factor_near`.
pub fn count_below(a: &CsrMatrix, sigma: f64) -> Result<usize> {
    Ok(factor_near(a, sigma)?.0.negative_count())
}

/// Dense Hermitian eigenpairs, ascending.
pub fn hermitian_eigen(m: DMatrix<C64>, vectors: bool) -> (Vec<f64>, Option<DMatrix<C64>>) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], vectors.then(|| DMatrix::zeros(0, 0)));
    }
    if !vectors {
        let ev = m.symmetric_eigenvalues();
        let mut v: Vec<f64> = ev.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        return (v, None);
    }
    let se = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| se.eigenvectors[(r, idx[c])]);
    (vals, Some(vecs))
}

/// Dense real symmetric eigenvalues, ascending.
pub fn symmetric_eigen_real(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let se = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| se.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Real symmetric tridiagonal matrix (diag, off) with off[i] = T[i, i+1].
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    /// #{eigenvalues < x} by the Sturm sequence.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            let denom = if q == 0.0 { f64::EPSILON * (self.off[i - 1].abs() + 1e-300) } else { q };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// k-th smallest eigenvalue (0-based) by bisection to absolute tolerance `tol`.
    pub fn kth_eigenvalue(&self, k: usize, tol: f64) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        while hi - lo > tol.max(f64::EPSILON * (lo.abs() + hi.abs())) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector for an accurate eigenvalue estimate by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.diag.len();
        let scale = self.gershgorin().1.abs().max(self.gershgorin().0.abs()).max(1.0);
        let shift = lambda + scale * 1e-14;
        // deterministic but non-special start
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * ((i as f64) * 0.7548776662).sin()).collect();
        for _ in 0..3 {
            self.solve_shifted(shift, &mut x);
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in x.iter_mut() {
                *v /= nrm;
            }
        }
        x
    }

    // Thomas algorithm with partial pivoting on (T - s I) x = rhs.
    fn solve_shifted(&self, s: f64, rhs: &mut [f64]) {
        let n = self.diag.len();
        if n == 1 {
            let p = self.diag[0] - s;
            rhs[0] /= if p == 0.0 { 1e-300 } else { p };
            return;
        }
        // banded LU with one extra superdiagonal from pivoting
        let mut a = vec![0.0; n]; // sub
        let mut b: Vec<f64> = self.diag.iter().map(|v| v - s).collect();
        let mut c = vec![0.0; n]; // super
        let mut e = vec![0.0; n]; // second super
        for i in 0..n - 1 {
            a[i + 1] = self.off[i];
            c[i] = self.off[i];
        }
        for i in 0..n - 1 {
            if a[i + 1].abs() > b[i].abs() {
                // swap rows i and i+1
                std::mem::swap(&mut b[i], &mut a[i + 1]);
                let (ci, bi1) = (c[i], b[i + 1]);
                c[i] = bi1;
                b[i + 1] = ci;
                let (ei, ci1) = (e[i], c[i + 1]);
                e[i] = ci1;
                c[i + 1] = ei;
                rhs.swap(i, i + 1);
            }
            if b[i] == 0.0 {
                b[i] = 1e-300;
            }
            let m = a[i + 1] / b[i];
            b[i + 1] -= m * c[i];
            if i + 1 < n - 1 {
                c[i + 1] -= m * e[i];
            }
            rhs[i + 1] -= m * rhs[i];
        }
        if b[n - 1] == 0.0 {
            b[n - 1] = 1e-300;
        }
        rhs[n - 1] /= b[n - 1];
        rhs[n - 2] = (rhs[n - 2] - c[n - 2] * rhs[n - 1]) / b[n - 2];
        for i in (0..n - 2).rev() {
            rhs[i] = (rhs[i] - c[i] * rhs[i + 1] - e[i] * rhs[i + 2]) / b[i];
        }
    }
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dvec(v: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, b: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, C64::new(rng.random_range(-2.0..2.0), 0.0)));
            for j in i + 1..(i + b + 1).min(n) {
                if rng.random_bool(0.5) {
                    let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    t.push((i, j, v));
                    t.push((j, i, v.conj()));
                }
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn ldl_solve_matches_dense() {
        let a = random_banded(60, 5, 3);
        let (f, s) = factor_near(&a, 0.37).unwrap();
        let x: Vec<C64> = (0..60).map(|i| C64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.02)).collect();
        let mut ax = a.apply(&x);
        for (v, xi) in ax.iter_mut().zip(&x) {
            *v -= s * xi;
        }
        f.solve_in_place(&mut ax);
        let err: f64 = ax.iter().zip(&x).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn inertia_counts_dense_eigenvalues() {
        let a = random_banded(80, 4, 11);
        let (vals, _) = hermitian_eigen(a.to_dense(), false);
        for &s in &[-3.0, -0.5, 0.0, 0.77, 2.9] {
            let want = vals.iter().filter(|&&v| v < s).count();
            assert_eq!(count_below(&a, s).unwrap(), want, "shift {s}");
        }
    }

    #[test]
    fn sturm_bisection_and_inverse_iteration() {
        // discrete Dirichlet Laplacian: eigenvalues 2 - 2cos(kπ/(n+1))
        let n = 50;
        let t = Tridiagonal { diag: vec![2.0; n], off: vec![-1.0; n - 1] };
        for k in [0usize, 7, 49] {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            let lam = t.kth_eigenvalue(k, 1e-14);
            assert!((lam - exact).abs() < 1e-12);
            let v = t.eigenvector(lam);
            let mut res = 0.0f64;
            for i in 0..n {
                let tv = 2.0 * v[i] - if i > 0 { v[i - 1] } else { 0.0 } - if i + 1 < n { v[i + 1] } else { 0.0 };
                res = res.max((tv - lam * v[i]).abs());
            }
            assert!(res < 1e-10, "residual {res}");
        }
    }

    #[test]
    fn permutation_preserves_spectrum() {
        let a = random_banded(30, 3, 5);
        let perm: Vec<usize> = (0..30).map(|i| (i * 7) % 30).collect();
        let (v1, _) = hermitian_eigen(a.to_dense(), false);
        let (v2, _) = hermitian_eigen(a.permuted(&perm).to_dense(), false);
        for (x, y) in v1.iter().zip(&v2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_product_matches_dense() {
        let a = random_banded(25, 3, 8);
        let b = random_banded(25, 2, 9);
        let p = a.matmul(&b).to_dense();
        let q = a.to_dense() * b.to_dense();
        assert!((p - q).iter().all(|v| v.norm() < 1e-13));
        let c = a.commutator(&a.adjoint());
        assert!(c.to_dense().iter().all(|v| v.norm() < 1e-13));
    }
}
