use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LatticeOperator, OracleSpectrum, SpectrumSource};
use crate::error::{Error, Result};
use crate::linalg::{factor_near, hermitian_eigen, CsrMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The k lowest eigenpairs.
    Lowest(usize),
    /// Every eigenpair with λ ≤ τ.
    Below(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Dense,
    Iterative,
    Sturm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Dense solve at or below this dimension.
    pub dense_max: usize,
    /// ‖Au − λu‖ bound for an accepted pair (unit u).
    pub residual_tol: f64,
    pub max_cycles: usize,
    /// Krylov blocks per restart cycle.
    pub krylov_blocks: usize,
    /// Shift for the inverse; defaults to just below the Gershgorin bound.
    pub shift: Option<f64>,
    pub seed: u64,
    pub vectors: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dense_max: 3000,
            residual_tol: 1e-8,
            max_cycles: 60,
            krylov_blocks: 3,
            shift: None,
            seed: 0,
            vectors: true,
        }
    }
}

fn gershgorin_lower(a: &CsrMatrix) -> f64 {
    (0..a.n)
        .map(|i| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (j, v) in a.row(i) {
                if j == i {
                    diag = v.re;
                } else {
                    off += v.norm();
                }
            }
            diag - off
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn eigensolve(op: &LatticeOperator, target: Target, cfg: &SolverConfig) -> Result<OracleSpectrum> {
    let a = &op.matrix;
    let n = a.n;
    if n <= cfg.dense_max {
        return dense(a, target, cfg.vectors);
    }
    let scale = a.norm_inf().max(1.0);
    let (k, tau) = match target {
        Target::Lowest(k) => (k.min(n), None),
        Target::Below(tau) => {
            let t = tau + 1e-12 * scale;
            (factor_near(a, t)?.0.negative_count(), Some(tau))
        }
    };
    if k == 0 {
        return Ok(OracleSpectrum {
            eigenvalues: vec![],
            eigenvectors: cfg.vectors.then(Vec::new),
            certified_max: tau.unwrap_or(f64::NEG_INFINITY),
            source: SpectrumSource::Lattice,
            solver: SolverKind::Iterative,
            worst_residual: 0.0,
        });
    }
    let (vals, vecs, worst) = lowest_pairs(a, k, cfg)?;
    let certified_max = match tau {
        Some(t) => t,
        None => certify(a, &vals, worst, scale)?,
    };
    Ok(OracleSpectrum {
        eigenvalues: vals,
        eigenvectors: cfg.vectors.then_some(vecs),
        certified_max,
        source: SpectrumSource::Lattice,
        solver: SolverKind::Iterative,
        worst_residual: worst,
    })
}

fn dense(a: &CsrMatrix, target: Target, vectors: bool) -> Result<OracleSpectrum> {
    let n = a.n;
    let (vals, vecs) = hermitian_eigen(a.to_dense(), vectors);
    let keep = match target {
        Target::Lowest(k) => k.min(n),
        Target::Below(tau) => vals.partition_point(|&l| l <= tau),
    };
    let certified_max = match target {
        _ if keep == n => f64::INFINITY,
        Target::Below(tau) => tau,
        // everything below the next computed eigenvalue is present
        Target::Lowest(_) => next_below(vals[keep]),
    };
    let eigenvectors = vecs.map(|m| (0..keep).map(|c| m.column(c).iter().copied().collect()).collect());
    Ok(OracleSpectrum {
        eigenvalues: vals[..keep].to_vec(),
        eigenvectors,
        certified_max,
        source: SpectrumSource::Lattice,
        solver: SolverKind::Dense,
        worst_residual: 0.0,
    })
}

fn next_below(x: f64) -> f64 {
    x - x.abs().max(1e-300) * 4.0 * f64::EPSILON
}

// Inertia check that no eigenvalue was skipped up to the returned bound.
fn certify(a: &CsrMatrix, vals: &[f64], worst: f64, scale: f64) -> Result<f64> {
    let delta = 2.0 * worst + 1e-12 * scale;
    let k = vals.len();
    let mut tries = 0;
    for j in (0..k).rev() {
        if j + 1 < k && vals[j + 1] - vals[j] <= 2.0 * delta {
            continue;
        }
        let c = vals[j] + delta;
        let (f, used) = factor_near(a, c)?;
        let found = vals.iter().filter(|&&l| l < used).count();
        if f.negative_count() == found {
            return Ok(used.min(c));
        }
        tries += 1;
        if tries == 3 {
            break;
        }
    }
    Err(Error::NoConvergence { iterations: 0, converged: 0, wanted: k, residual: worst })
}

/// Complex n×m block stored as separate real and imaginary parts, so that the
/// products run on the real GEMM kernel.
#[derive(Clone)]
struct Block {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Block {
    fn zeros(n: usize, m: usize) -> Self {
        Block { re: DMatrix::zeros(n, m), im: DMatrix::zeros(n, m) }
    }

    fn from_cols(n: usize, cols: &[Vec<C64>]) -> Self {
        let mut b = Block::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, z) in c.iter().enumerate() {
                b.re[(i, j)] = z.re;
                b.im[(i, j)] = z.im;
            }
        }
        b
    }

    fn from_complex(m: &DMatrix<C64>) -> Self {
        Block { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    fn ncols(&self) -> usize {
        self.re.ncols()
    }

    fn col(&self, j: usize) -> Vec<C64> {
        self.re.column(j).iter().zip(self.im.column(j).iter()).map(|(&a, &b)| C64::new(a, b)).collect()
    }

    fn set_col(&mut self, j: usize, v: &[C64]) {
        for (i, z) in v.iter().enumerate() {
            self.re[(i, j)] = z.re;
            self.im[(i, j)] = z.im;
        }
    }

    fn cols(&self) -> Vec<Vec<C64>> {
        (0..self.ncols()).map(|j| self.col(j)).collect()
    }

    fn columns(&self, start: usize, count: usize) -> Block {
        Block { re: self.re.columns(start, count).into_owned(), im: self.im.columns(start, count).into_owned() }
    }

    fn hcat(&self, other: &Block) -> Block {
        let n = self.re.nrows();
        let (a, b) = (self.ncols(), other.ncols());
        let mut out = Block::zeros(n, a + b);
        out.re.columns_mut(0, a).copy_from(&self.re);
        out.im.columns_mut(0, a).copy_from(&self.im);
        out.re.columns_mut(a, b).copy_from(&other.re);
        out.im.columns_mut(a, b).copy_from(&other.im);
        out
    }

    /// selfᴴ · b
    fn adj_mul(&self, b: &Block) -> Block {
        let rt = self.re.transpose();
        let it = self.im.transpose();
        Block { re: &rt * &b.re + &it * &b.im, im: &rt * &b.im - &it * &b.re }
    }

    fn mul(&self, b: &Block) -> Block {
        Block { re: &self.re * &b.re - &self.im * &b.im, im: &self.re * &b.im + &self.im * &b.re }
    }

    fn sub_assign(&mut self, b: &Block) {
        self.re -= &b.re;
        self.im -= &b.im;
    }

    fn to_complex(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.re.nrows(), self.ncols(), |i, j| C64::new(self.re[(i, j)], self.im[(i, j)]))
    }

    fn col_norm(&self, j: usize) -> f64 {
        (self.re.column(j).norm_squared() + self.im.column(j).norm_squared()).sqrt()
    }
}

fn project_out(q: &[C64], w: &mut [C64]) {
    let c: C64 = q.iter().zip(w.iter()).map(|(x, y)| x.conj() * y).sum();
    for (wi, qi) in w.iter_mut().zip(q) {
        *wi -= c * qi;
    }
}

fn norm(w: &[C64]) -> f64 {
    w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

// Block classical Gram–Schmidt against the basis, applied twice, then
// Gram–Schmidt inside the block. A column whose norm collapses is projected
// again (up to three passes) and dropped if it falls below 1e-8 of its start.
fn orthonormalize_against(basis: &Block, block: &Block) -> Block {
    let n = block.re.nrows();
    let first: Vec<f64> = (0..block.ncols()).map(|j| block.col_norm(j)).collect();
    let mut w = block.clone();
    if basis.ncols() > 0 {
        for _ in 0..2 {
            let c = basis.adj_mul(&w);
            w.sub_assign(&basis.mul(&c));
        }
    }
    let mut kept: Vec<Vec<C64>> = Vec::with_capacity(w.ncols());
    for (j, orig) in first.into_iter().enumerate() {
        let mut v = w.col(j);
        let mut nrm = norm(&v);
        for pass in 0..3 {
            if pass > 0 && basis.ncols() > 0 {
                let mut one = Block::zeros(n, 1);
                one.set_col(0, &v);
                let c = basis.adj_mul(&one);
                one.sub_assign(&basis.mul(&c));
                v = one.col(0);
            }
            for q in &kept {
                project_out(q, &mut v);
            }
            let after = norm(&v);
            let done = after > 0.7 * nrm;
            nrm = after;
            if done {
                break;
            }
        }
        if nrm > 1e-8 * orig.max(1e-300) {
            for x in v.iter_mut() {
                *x /= nrm;
            }
            kept.push(v);
        }
    }
    Block::from_cols(n, &kept)
}

/// Restarted block Krylov on (A − σ)⁻¹ with full reorthogonalisation and
/// Rayleigh–Ritz on A. Blocks wider than the wanted count keep degenerate
/// clusters intact.
fn lowest_pairs(a: &CsrMatrix, k: usize, cfg: &SolverConfig) -> Result<(Vec<f64>, Vec<Vec<C64>>, f64)> {
    let n = a.n;
    let scale = a.norm_inf().max(1.0);
    let sigma = cfg.shift.unwrap_or_else(|| gershgorin_lower(a) - 1e-6 * scale);
    let (ldl, _) = factor_near(a, sigma)?;
    let bs = (k + (k / 2).max(8)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start_cols: Vec<Vec<C64>> = (0..bs)
        .map(|_| (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect())
        .collect();
    let mut start = Block::from_cols(n, &start_cols);
    let solve = |b: &Block| -> Block {
        let mut cols = b.cols();
        cols.par_iter_mut().for_each(|v| ldl.solve_in_place(v));
        Block::from_cols(n, &cols)
    };
    let mut worst = f64::INFINITY;
    let mut converged = 0;
    for _cycle in 0..cfg.max_cycles {
        let mut basis = Block::zeros(n, 0);
        let mut block = orthonormalize_against(&basis, &start);
        for step in 0..cfg.krylov_blocks.max(1) {
            let next = (step + 1 < cfg.krylov_blocks).then(|| solve(&block));
            basis = basis.hcat(&block);
            match next {
                Some(w) => {
                    block = orthonormalize_against(&basis, &w);
                    if block.ncols() == 0 {
                        break;
                    }
                }
                None => break,
            }
        }
        let m = basis.ncols();
        let av_cols: Vec<Vec<C64>> = basis.cols().par_iter().map(|q| a.apply(q)).collect();
        let av = Block::from_cols(n, &av_cols);
        let mut hm = basis.adj_mul(&av).to_complex();
        // symmetrise away rounding
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (hm[(i, j)] + hm[(j, i)].conj());
                hm[(i, j)] = s;
                hm[(j, i)] = s.conj();
            }
            hm[(i, i)] = C64::new(hm[(i, i)].re, 0.0);
        }
        let (theta, y) = hermitian_eigen(hm, true);
        let y = y.expect("vectors requested");
        let keep = bs.min(m);
        let yk = Block::from_complex(&y.columns(0, keep).into_owned());
        let ritz = basis.mul(&yk);
        let aritz = av.mul(&yk);
        let residuals: Vec<f64> = (0..keep.min(k))
            .map(|c| {
                let dr = aritz.re.column(c) - ritz.re.column(c) * theta[c];
                let di = aritz.im.column(c) - ritz.im.column(c) * theta[c];
                (dr.norm_squared() + di.norm_squared()).sqrt()
            })
            .collect();
        worst = residuals.iter().copied().fold(0.0, f64::max);
        converged = residuals.iter().filter(|&&r| r <= cfg.residual_tol).count();
        if keep >= k && converged == k {
            let vals = theta[..k].to_vec();
            let vecs = (0..k).map(|c| ritz.col(c)).collect();
            return Ok((vals, vecs, worst));
        }
        start = solve(&ritz.columns(0, keep));
    }
    Err(Error::NoConvergence { iterations: cfg.max_cycles, converged, wanted: k, residual: worst })
}
