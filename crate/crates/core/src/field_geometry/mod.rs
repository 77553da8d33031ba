//! Eigenstructure of the magnetic intensity matrix, resonance grouping and the
//! constant-coefficient canonical reduction.
//!
//! Conventions: the metric is the inverse metric g^{jk}; S = g^{1/2} F g^{1/2} is
//! real skew with eigenvalues ±i f_p and 0 (q times).

mod operator;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use operator::{unit_ball_volume, Cutoff, MagneticField, Metric, OperatorSpec, Smoothness};

use crate::error::{Error, Result};

pub const DEFAULT_EPS0: f64 = 1e-8;
pub const DEFAULT_EPS_GROUP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEigenstructure {
    /// Intensities f_1 ≥ … ≥ f_r > 0.
    pub f: Vec<f64>,
    pub r: usize,
    pub q: usize,
    /// Orthonormal (Euclidean) basis of Ker F.
    pub kernel_basis: Vec<Vec<f64>>,
    /// Index groups over 0..r.
    pub partition: Vec<Vec<usize>>,
    pub group_values: Vec<f64>,
}

impl FieldEigenstructure {
    pub fn product_f(&self) -> f64 {
        self.f.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalForm {
    /// Orthogonal M with Mᵀ S M block-canonical.
    pub transform: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    /// G with V_j(x) = Σ_k G_{jk} x_k realising the canonical Landau gauge.
    pub gauge_coeffs: Vec<Vec<f64>>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Resonance {
    pub order: u8,
    /// Second order: (j, k). Third order: (j, k, m) with f_j ≈ f_k + f_m, k ≤ m.
    pub indices: Vec<usize>,
}

pub(crate) fn mat_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub(crate) fn rows_mat(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j])
}

fn sym_sqrt(g: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let se = g.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&se.eigenvalues.map(|v| v.powf(power)));
    &se.eigenvectors * d * se.eigenvectors.transpose()
}

fn scaled_field(g: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = (f + f.transpose()).abs().max();
    if asym > 1e-12 {
        return Err(Error::NotSkew(asym));
    }
    let gh = sym_sqrt(g, 0.5);
    let s = &gh * f * &gh;
    // exact skew part removes rounding asymmetry
    Ok((&s - s.transpose()) * 0.5)
}

/// Eigenstructure of (g, F) at a single point.
pub fn eigenstructure_of(g: &DMatrix<f64>, field: &DMatrix<f64>, eps0: f64, eps_group: f64) -> Result<FieldEigenstructure> {
    let d = g.nrows();
    let s = scaled_field(g, field)?;
    let mut sv: Vec<f64> = s.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    for &v in &sv {
        if v > eps0 / 10.0 && v < eps0 {
            return Err(Error::RankAmbiguous { value: v, lo: eps0 / 10.0, hi: eps0 });
        }
    }
    let rank = sv.iter().filter(|&&v| v >= eps0).count();
    if rank % 2 != 0 {
        return Err(Error::Degenerate(format!("odd numerical rank {rank} for a skew matrix")));
    }
    let r = rank / 2;
    let q = d - 2 * r;
    if q == 0 {
        return Err(Error::FullRank);
    }
    let f: Vec<f64> = (0..r).map(|p| 0.5 * (sv[2 * p] + sv[2 * p + 1])).collect();

    let gh = sym_sqrt(g, 0.5);
    let basis = spectral_basis(&s, r, q)?;
    let mut kernel: Vec<DVector<f64>> = Vec::new();
    for v in basis.kernel {
        let mut w = &gh * v;
        for u in &kernel {
            let c = u.dot(&w);
            w -= u * c;
        }
        let n = w.norm();
        if n < 1e-12 {
            return Err(Error::Degenerate("kernel basis collapsed".into()));
        }
        kernel.push(w / n);
    }
    let partition = resonance_partition(&f, eps_group);
    let group_values = partition.iter().map(|g| g.iter().map(|&i| f[i]).sum::<f64>() / g.len() as f64).collect();
    Ok(FieldEigenstructure {
        f,
        r,
        q,
        kernel_basis: kernel.iter().map(|v| v.iter().copied().collect()).collect(),
        partition,
        group_values,
    })
}

/// Eigenstructure at the spec's reference point (cutoff centre).
pub fn compute_eigenstructure(spec: &OperatorSpec, eps0: f64, eps_group: f64) -> Result<FieldEigenstructure> {
    eigenstructure_at(spec, &spec.reference_point(), eps0, eps_group)
}

pub fn eigenstructure_at(spec: &OperatorSpec, x: &[f64], eps0: f64, eps_group: f64) -> Result<FieldEigenstructure> {
    eigenstructure_of(&spec.metric_at(x), &spec.field_at(x), eps0, eps_group)
}

/// Greedy grouping of sorted intensities by consecutive gaps ≤ eps_group·max f.
pub fn resonance_partition(f: &[f64], eps_group: f64) -> Vec<Vec<usize>> {
    if f.is_empty() {
        return vec![];
    }
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    let tol = eps_group * f.iter().copied().fold(0.0, f64::max);
    let mut groups: Vec<Vec<usize>> = vec![vec![order[0]]];
    for w in order.windows(2) {
        if f[w[0]] - f[w[1]] <= tol {
            groups.last_mut().unwrap().push(w[1]);
        } else {
            groups.push(vec![w[1]]);
        }
    }
    for g in groups.iter_mut() {
        g.sort_unstable();
    }
    groups
}

/// Second-order pairs |f_j − f_k| ≤ tol and third-order triples |f_j − f_k − f_m| ≤ tol.
pub fn detect_resonances(f: &[f64], tol: f64) -> Vec<Resonance> {
    let r = f.len();
    let mut out = Vec::new();
    for j in 0..r {
        for k in j + 1..r {
            if (f[j] - f[k]).abs() <= tol {
                out.push(Resonance { order: 2, indices: vec![j, k] });
            }
        }
    }
    for j in 0..r {
        for k in 0..r {
            for m in k..r {
                if (f[j] - f[k] - f[m]).abs() <= tol {
                    out.push(Resonance { order: 3, indices: vec![j, k, m] });
                }
            }
        }
    }
    out.sort();
    out
}

struct SpectralBasis {
    // columns [v_1, u_1, v_2, u_2, …] with S u = f v, S v = −f u
    pairs: Vec<(f64, DVector<f64>, DVector<f64>)>,
    kernel: Vec<DVector<f64>>,
}

// Most aligned coordinate direction projected on `space`, preferring higher indices on ties.
fn pick_direction(space: &[DVector<f64>], d: usize) -> Option<DVector<f64>> {
    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in (0..d).rev() {
        let mut p = DVector::zeros(d);
        for b in space {
            p += b * b[k];
        }
        let n = p.norm();
        if best.as_ref().map_or(true, |(bn, _)| n > bn + 1e-9) {
            best = Some((n, p));
        }
    }
    best.filter(|(n, _)| *n > 1e-8).map(|(n, p)| p / n)
}

fn orth_complement(space: &[DVector<f64>], remove: &[&DVector<f64>]) -> Vec<DVector<f64>> {
    // re-orthonormalise space with the removed directions projected out
    let mut out: Vec<DVector<f64>> = Vec::new();
    for b in space {
        let mut w = b.clone();
        for _ in 0..2 {
            for r in remove {
                let c = r.dot(&w);
                w -= *r * c;
            }
            for o in &out {
                let c = o.dot(&w);
                w -= o * c;
            }
        }
        let n = w.norm();
        if n > 1e-8 {
            out.push(w / n);
        }
    }
    out
}

fn spectral_basis(s: &DMatrix<f64>, r: usize, q: usize) -> Result<SpectralBasis> {
    let d = s.nrows();
    let sts = s.transpose() * s;
    let se = sts.symmetric_eigen();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let vecs: Vec<DVector<f64>> = idx.iter().map(|&i| se.eigenvectors.column(i).into_owned()).collect();
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i].max(0.0)).collect();
    let top = vals.first().copied().unwrap_or(0.0).max(1e-300);

    let kernel_space: Vec<DVector<f64>> = vecs[2 * r..].to_vec();
    let mut kernel = Vec::new();
    let mut remaining = kernel_space;
    for _ in 0..q {
        let u = pick_direction(&remaining, d).ok_or_else(|| Error::Degenerate("kernel basis incomplete".into()))?;
        remaining = orth_complement(&remaining, &[&u]);
        kernel.push(u);
    }

    let mut pairs = Vec::new();
    let mut start = 0;
    while start < 2 * r {
        let mut end = start + 1;
        while end < 2 * r && (vals[end - 1] - vals[end]).abs() <= 1e-9 * top {
            end += 1;
        }
        if (end - start) % 2 != 0 {
            return Err(Error::Degenerate("eigenspace of -S² with odd dimension".into()));
        }
        let mut space: Vec<DVector<f64>> = vecs[start..end].to_vec();
        for _ in 0..(end - start) / 2 {
            let u = pick_direction(&space, d).ok_or_else(|| Error::Degenerate("pair extraction failed".into()))?;
            let su = s * &u;
            let fp = su.norm();
            let v = su / fp;
            space = orth_complement(&space, &[&u, &v]);
            pairs.push((fp, v, u));
        }
        start = end;
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(SpectralBasis { pairs, kernel })
}

/// Block-canonical skew matrix with 2×2 blocks [0, f; −f, 0] followed by zeros.
pub fn canonical_matrix(f: &[f64], d: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(d, d);
    for (p, &fp) in f.iter().enumerate() {
        c[(2 * p, 2 * p + 1)] = fp;
        c[(2 * p + 1, 2 * p)] = -fp;
    }
    c
}

/// Orthogonal reduction of a constant (g, F) to block-canonical form with a Landau gauge.
pub fn canonical_reduce_constant(spec: &OperatorSpec) -> Result<CanonicalForm> {
    if !spec.metric_is_constant() || !spec.field_is_constant() {
        return Err(Error::InvalidSpec("canonical reduction needs constant metric and field".into()));
    }
    let x0 = spec.reference_point();
    canonical_reduce(&spec.metric_at(&x0), &spec.field_at(&x0))
}

pub fn canonical_reduce(g: &DMatrix<f64>, field: &DMatrix<f64>) -> Result<CanonicalForm> {
    let d = g.nrows();
    let es = eigenstructure_of(g, field, DEFAULT_EPS0, DEFAULT_EPS_GROUP)?;
    let s = scaled_field(g, field)?;
    let basis = spectral_basis(&s, es.r, es.q)?;
    if basis.kernel.len() != es.q || basis.pairs.len() != es.r {
        return Err(Error::Degenerate("basis size inconsistent with eigenstructure".into()));
    }
    let mut m = DMatrix::zeros(d, d);
    let mut fvals = Vec::with_capacity(es.r);
    for (p, (_, v, u)) in basis.pairs.iter().enumerate() {
        m.set_column(2 * p, v);
        m.set_column(2 * p + 1, u);
        fvals.push(es.f[p]);
    }
    for (k, w) in basis.kernel.iter().enumerate() {
        m.set_column(2 * es.r + k, w);
    }
    let c = canonical_matrix(&fvals, d);
    let diff = m.transpose() * &s * &m - &c;
    let residual = diff.svd(false, false).singular_values.max();

    // V(x) = G x with G = T^{-T} Λ T^{-1}, T = g^{1/2} M, Λ_{2p+1, 2p} = f_p
    let mut lam = DMatrix::zeros(d, d);
    for (p, &fp) in fvals.iter().enumerate() {
        lam[(2 * p + 1, 2 * p)] = fp;
    }
    let t_inv = m.transpose() * sym_sqrt(g, -0.5);
    let gauge = t_inv.transpose() * lam * &t_inv;
    Ok(CanonicalForm { transform: mat_rows(&m), f: fvals, gauge_coeffs: mat_rows(&gauge), residual })
}

impl CanonicalForm {
    /// F rebuilt as g^{-1/2} M C Mᵀ g^{-1/2}.
    pub fn reconstruct_field(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let m = rows_mat(&self.transform);
        let c = canonical_matrix(&self.f, m.nrows());
        let gi = sym_sqrt(g, -0.5);
        &gi * &m * c * m.transpose() * &gi
    }

    /// Field of the gauge potential, ∂_j V_k − ∂_k V_j = G_{kj} − G_{jk}.
    pub fn gauge_field(&self) -> DMatrix<f64> {
        let g = rows_mat(&self.gauge_coeffs);
        g.transpose() - g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn skew(d: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(d, d);
        for &(i, j, v) in entries {
            f[(i, j)] = v;
            f[(j, i)] = -v;
        }
        f
    }

    #[test]
    fn single_rotation_block() {
        let es = eigenstructure_of(&DMatrix::identity(3, 3), &skew(3, &[(0, 1, 1.0)]), 1e-8, 1e-6).unwrap();
        assert_eq!((es.r, es.q), (1, 1));
        assert!((es.f[0] - 1.0).abs() < 1e-14);
        let k = &es.kernel_basis[0];
        assert!((k[2].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_blocks_sorted_descending() {
        let f = skew(5, &[(0, 1, 1.0), (2, 3, 2.0)]);
        let es = eigenstructure_of(&DMatrix::identity(5, 5), &f, 1e-8, 1e-6).unwrap();
        assert_eq!((es.r, es.q), (2, 1));
        assert!((es.f[0] - 2.0).abs() < 1e-14 && (es.f[1] - 1.0).abs() < 1e-14);
        assert_eq!(es.partition, vec![vec![0], vec![1]]);
    }

    #[test]
    fn weighted_metric_against_characteristic_polynomial() {
        // oracle: S = g^{1/2} F g^{1/2} has S12 = 1, S13 = 0.6; the quartic
        // λ^4 + (Σ_{i<j} S_ij^2) λ^2 + Pf(S)^2 has Pf = 0, so f^2 = 1 + 0.36
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0, 4.0]));
        let f = skew(4, &[(0, 1, 1.0), (0, 2, 0.3)]);
        let es = eigenstructure_of(&g, &f, 1e-8, 1e-6).unwrap();
        assert_eq!((es.r, es.q), (1, 2));
        assert!((es.f[0] - 1.36f64.sqrt()).abs() < 1e-13);
        // kernel vectors are annihilated by F
        for k in &es.kernel_basis {
            let v = DVector::from_column_slice(k);
            assert!((&f * v).norm() < 1e-13);
        }
    }

    #[test]
    fn dead_zone_raises_rank_ambiguous() {
        let f = skew(3, &[(0, 1, 5e-9)]);
        let e = eigenstructure_of(&DMatrix::identity(3, 3), &f, 1e-8, 1e-6).unwrap_err();
        assert!(matches!(e, Error::RankAmbiguous { .. }));
        let tiny = skew(3, &[(0, 1, 1e-10)]);
        let es = eigenstructure_of(&DMatrix::identity(3, 3), &tiny, 1e-8, 1e-6).unwrap();
        assert_eq!((es.r, es.q), (0, 3));
    }

    #[test]
    fn full_rank_rejected() {
        let f = skew(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert_eq!(eigenstructure_of(&DMatrix::identity(4, 4), &f, 1e-8, 1e-6).unwrap_err(), Error::FullRank);
    }

    #[test]
    fn partition_examples() {
        assert_eq!(resonance_partition(&[1.0, 1.0], 1e-6), vec![vec![0, 1]]);
        assert_eq!(resonance_partition(&[2.0, 1.0], 1e-6), vec![vec![0], vec![1]]);
        assert_eq!(resonance_partition(&[1.0, 1.0 + 5e-7, 0.5], 1e-6), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn resonance_examples() {
        let r2 = detect_resonances(&[2.0, 1.0], 1e-9);
        assert!(r2.contains(&Resonance { order: 3, indices: vec![0, 1, 1] }));
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        // the only candidate relations are f_j = f_k + f_m over 2 values
        assert!(detect_resonances(&[1.0, phi], 1e-9).is_empty());
        let r3 = detect_resonances(&[3.0, 2.0, 1.0], 1e-9);
        assert!(r3.contains(&Resonance { order: 3, indices: vec![0, 1, 2] }));
        // also 2 = 1 + 1
        assert!(r3.contains(&Resonance { order: 3, indices: vec![1, 2, 2] }));
    }

    #[test]
    fn landau_gauge_for_axis_aligned_field() {
        let mut spec = OperatorSpec::constant(skew(3, &[(0, 1, 1.0)]), 0.0, 3.0, 0.1);
        spec.cutoff = Cutoff::One;
        let cf = canonical_reduce_constant(&spec).unwrap();
        assert!(cf.residual < 1e-14);
        let m = rows_mat(&cf.transform);
        assert!((m.clone() - DMatrix::identity(3, 3)).abs().max() < 1e-14, "{m}");
        // V_2 = x_1 (1-based): G[1][0] = 1, all else 0
        let g = rows_mat(&cf.gauge_coeffs);
        assert!((g[(1, 0)] - 1.0).abs() < 1e-14);
        assert!((g.abs().sum() - 1.0).abs() < 1e-14);
    }

    fn random_skew(d: usize, vals: &[f64]) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(d, d);
        let mut it = vals.iter();
        for i in 0..d {
            for j in i + 1..d {
                let v = *it.next().unwrap();
                f[(i, j)] = v;
                f[(j, i)] = -v;
            }
        }
        f
    }

    #[test]
    fn random_full_rank_four_dimensional_block_is_canonical() {
        // embedded in d = 5 so that q = 1
        let mut f = DMatrix::zeros(5, 5);
        let inner = random_skew(4, &[0.3, -1.2, 0.7, 0.4, 0.9, -0.5]);
        f.view_mut((0, 0), (4, 4)).copy_from(&inner);
        let cf = canonical_reduce(&DMatrix::identity(5, 5), &f).unwrap();
        let m = rows_mat(&cf.transform);
        let c = canonical_matrix(&cf.f, 5);
        assert!((m.transpose() * &f * &m - c).abs().max() < 1e-10);
    }

    proptest! {
        #[test]
        fn homogeneity(vals in proptest::collection::vec(-2.0f64..2.0, 10), c in 0.1f64..10.0) {
            // d = 5 always has q ≥ 1
            let f = random_skew(5, &vals);
            let g = DMatrix::identity(5, 5);
            let a = eigenstructure_of(&g, &f, 1e-8, 1e-6);
            let b = eigenstructure_of(&g, &(&f * c), 1e-8 * c, 1e-6);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.q, b.q);
                for (x, y) in a.f.iter().zip(&b.f) {
                    prop_assert!((c * x - y).abs() <= 1e-12 * y.abs().max(1.0));
                }
            }
        }

        #[test]
        fn rotation_invariance(vals in proptest::collection::vec(-2.0f64..2.0, 10),
                               angles in proptest::collection::vec(-3.0f64..3.0, 10)) {
            let f = random_skew(5, &vals);
            let o = random_skew(5, &angles).exp();
            let g = DMatrix::identity(5, 5);
            let a = eigenstructure_of(&g, &f, 1e-8, 1e-6);
            let b = eigenstructure_of(&g, &(o.transpose() * &f * &o), 1e-8, 1e-6);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.r, b.r);
                for (x, y) in a.f.iter().zip(&b.f) {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }

        #[test]
        fn canonical_round_trip(vals in proptest::collection::vec(-2.0f64..2.0, 10),
                                diag in proptest::collection::vec(0.2f64..5.0, 5)) {
            let f = random_skew(5, &vals);
            let g = DMatrix::from_diagonal(&DVector::from_vec(diag));
            if let Ok(cf) = canonical_reduce(&g, &f) {
                prop_assert!(cf.residual <= 1e-10 * (1.0 + cf.f.first().copied().unwrap_or(0.0)));
                prop_assert!((cf.reconstruct_field(&g) - &f).abs().max() <= 1e-10 * (1.0 + f.abs().max()));
                prop_assert!((cf.gauge_field() - &f).abs().max() <= 1e-10 * (1.0 + f.abs().max()));
            }
        }

        #[test]
        fn partition_idempotent_and_stable(f in proptest::collection::vec(0.1f64..3.0, 1..6)) {
            let p = resonance_partition(&f, 1e-2);
            prop_assert_eq!(&p, &resonance_partition(&f, 1e-2));
            let mut covered: Vec<usize> = p.iter().flatten().copied().collect();
            covered.sort_unstable();
            prop_assert_eq!(covered, (0..f.len()).collect::<Vec<_>>());
            // collapsing groups to their mean reproduces the same grouping
            let mut g = f.clone();
            for grp in &p {
                let m = grp.iter().map(|&i| f[i]).sum::<f64>() / grp.len() as f64;
                for &i in grp { g[i] = m; }
            }
            let p2 = resonance_partition(&g, 1e-2);
            prop_assert_eq!(p2.len(), p.len());
        }

        #[test]
        fn detected_triples_satisfy_tolerance(f in proptest::collection::vec(0.1f64..3.0, 1..5), tol in 1e-3f64..0.2) {
            for res in detect_resonances(&f, tol) {
                let ix = &res.indices;
                if res.order == 3 {
                    prop_assert!((f[ix[0]] - f[ix[1]] - f[ix[2]]).abs() <= tol);
                } else {
                    prop_assert!((f[ix[0]] - f[ix[1]]).abs() <= tol);
                }
            }
        }
    }
}
