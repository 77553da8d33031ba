//! Brute-force spectra: a Peierls lattice discretisation of the magnetic
//! Schrödinger operator and an exact tensor oracle for constant fields.
//!
//! Lattice eigenvectors are ℓ²-normalised, so Σ_x |u(x)|²ψ(x) approximates
//! ∫|u|²ψ dx for the continuum-normalised eigenfunction; the cell volume
//! cancels.

mod cache;
mod eigensolve;
mod separable;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_geometry::{Cutoff, MagneticField, Metric, OperatorSpec};
use crate::linalg::{CsrMatrix, C64};

pub use cache::{cache_dir, read_spectrum, spectrum_path, write_spectrum, CACHE_ENV};
pub use eigensolve::{eigensolve, SolverConfig, SolverKind, Target};
pub use separable::{separable_oracle, SeparableConfig, SeparableSpectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Dirichlet,
}

/// Box and resolution for the lattice. Periodic axes place sites at
/// lo + iΔ with Δ = (hi−lo)/n; Dirichlet axes at lo + (i+1)Δ with Δ = (hi−lo)/(n+1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
    /// Minimum sites per magnetic length √(h/μ) and per de Broglie length.
    #[serde(default = "default_points_per_length")]
    pub points_per_length: f64,
    /// Energy for the de Broglie check; skipped when absent.
    #[serde(default)]
    pub resolution_energy: Option<f64>,
}

fn default_points_per_length() -> f64 {
    8.0
}

impl GridConfig {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Self {
        GridConfig { lo, hi, n, points_per_length: default_points_per_length(), resolution_energy: None }
    }
}

/// One stored edge: H[from, to] = −hop[axis]·phase, H[to, from] its conjugate.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub axis: usize,
    pub phase: C64,
}

#[derive(Clone, Debug)]
pub struct LatticeOperator {
    pub d: usize,
    pub n: Vec<usize>,
    pub spacing: Vec<f64>,
    pub bc: Vec<Boundary>,
    /// h²g^{jj}/Δ_j².
    pub hop: Vec<f64>,
    pub links: Vec<Link>,
    pub diagonal: Vec<f64>,
    /// Site coordinates, d per site, in matrix order.
    pub sites: Vec<f64>,
    pub matrix: CsrMatrix,
}

impl LatticeOperator {
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.sites[i * self.d..(i + 1) * self.d]
    }

    /// Conjugate by diag(e^{iθ}): U_{xy} → e^{−iθ_x}U_{xy}e^{iθ_y}.
    pub fn gauge_transformed(&self, theta: &[f64]) -> LatticeOperator {
        let links: Vec<Link> = self
            .links
            .iter()
            .map(|l| Link {
                phase: l.phase * C64::from_polar(1.0, theta[l.to] - theta[l.from]),
                ..l.clone()
            })
            .collect();
        let matrix = build_matrix(self.len(), &self.diagonal, &self.hop, &links);
        LatticeOperator { links, matrix, ..self.clone() }
    }

    /// Product of link phases around every elementary plaquette in the (a, b) plane,
    /// as angles in (−π, π].
    pub fn plaquette_angles(&self, a: usize, b: usize) -> Vec<f64> {
        let mut step = vec![std::collections::HashMap::new(); self.d];
        for l in &self.links {
            step[l.axis].insert(l.from, (l.to, l.phase));
        }
        let mut out = Vec::new();
        for x in 0..self.len() {
            let path = (|| {
                let (y, u1) = *step[a].get(&x)?;
                let (z, u2) = *step[b].get(&y)?;
                let (w, u4) = *step[b].get(&x)?;
                let (z2, u3) = *step[a].get(&w)?;
                (z == z2).then(|| u1 * u2 * u3.conj() * u4.conj())
            })();
            if let Some(p) = path {
                out.push(p.arg());
            }
        }
        out
    }
}

// Folding keeps periodic neighbours (including the wrap) within two positions.
fn fold(i: usize, n: usize) -> usize {
    if i < n.div_ceil(2) {
        2 * i
    } else {
        2 * (n - 1 - i) + 1
    }
}

fn build_matrix(n: usize, diagonal: &[f64], hop: &[f64], links: &[Link]) -> CsrMatrix {
    let mut t = Vec::with_capacity(n + 2 * links.len());
    for (i, &v) in diagonal.iter().enumerate() {
        t.push((i, i, C64::new(v, 0.0)));
    }
    for l in links {
        let v = l.phase * (-hop[l.axis]);
        t.push((l.from, l.to, v));
        t.push((l.to, l.from, v.conj()));
    }
    CsrMatrix::from_triplets(n, t)
}

pub(crate) fn diagonal_metric(spec: &OperatorSpec) -> Result<Vec<f64>> {
    let rows = match &spec.metric {
        Metric::Constant(rows) => rows,
        Metric::Field(_) if spec.metric_is_constant() => {
            let g = spec.metric_at(&spec.reference_point());
            return diagonal_metric(&OperatorSpec {
                metric: Metric::Constant((0..spec.d).map(|i| (0..spec.d).map(|j| g[(i, j)]).collect()).collect()),
                ..spec.clone()
            });
        }
        Metric::Field(_) => return Err(Error::InvalidSpec("lattice oracle needs a constant metric".into())),
    };
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            if i != j && *v != 0.0 {
                return Err(Error::InvalidSpec("lattice oracle needs a diagonal metric".into()));
            }
        }
    }
    Ok((0..spec.d).map(|j| rows[j][j]).collect())
}

/// Jacobian B[k][j] = ∂_j V_k of an affine vector potential.
fn affine_jacobian(spec: &OperatorSpec) -> Option<Vec<Vec<f64>>> {
    let d = spec.d;
    match &spec.field {
        MagneticField::Constant(rows) => {
            Some((0..d).map(|k| (0..d).map(|j| if j < k { rows[j][k] } else { 0.0 }).collect()).collect())
        }
        MagneticField::VectorPotential(v) => v.iter().map(|c| c.affine(d).map(|(a, _)| a)).collect(),
    }
}

/// Second-order finite differences with Peierls midpoint phases
/// U = exp(−i(μ/h)Δ_j V_j(midpoint)).
pub fn assemble(spec: &OperatorSpec, grid: &GridConfig, bc: Boundary) -> Result<LatticeOperator> {
    assemble_mixed(spec, grid, &vec![bc; spec.d])
}

/// As [`assemble`] with a boundary condition per axis.
pub fn assemble_mixed(spec: &OperatorSpec, grid: &GridConfig, bc: &[Boundary]) -> Result<LatticeOperator> {
    use Boundary::{Dirichlet, Periodic};
    spec.validate()?;
    let d = spec.d;
    if grid.lo.len() != d || grid.hi.len() != d || grid.n.len() != d || bc.len() != d {
        return Err(Error::InvalidSpec(format!("grid needs {d} entries per axis")));
    }
    for k in 0..d {
        let min_n = if bc[k] == Periodic { 3 } else { 1 };
        if grid.n[k] < min_n || !(grid.hi[k] > grid.lo[k]) {
            return Err(Error::InvalidSpec(format!("grid axis {k}: need hi > lo and at least {min_n} sites")));
        }
    }
    let ginv = diagonal_metric(spec)?;
    let (mu, h) = (spec.mu, spec.h);
    let spacing: Vec<f64> = (0..d)
        .map(|k| {
            let cells = if bc[k] == Periodic { grid.n[k] } else { grid.n[k] + 1 };
            (grid.hi[k] - grid.lo[k]) / cells as f64
        })
        .collect();
    let length: Vec<f64> = (0..d).map(|k| grid.hi[k] - grid.lo[k]).collect();
    let coord = |k: usize, i: usize| match bc[k] {
        Periodic => grid.lo[k] + i as f64 * spacing[k],
        Dirichlet => grid.lo[k] + (i + 1) as f64 * spacing[k],
    };

    let jac = affine_jacobian(spec);
    if bc.contains(&Periodic) {
        let b = jac
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("periodic boundary needs an affine vector potential".into()))?;
        for j in 0..d {
            for k in j + 1..d {
                if bc[j] == Dirichlet || bc[k] == Dirichlet {
                    continue;
                }
                let f = b[k][j] - b[j][k];
                let flux = mu * f * length[j] * length[k] / (2.0 * std::f64::consts::PI * h);
                if (flux - flux.round()).abs() > 1e-9 {
                    return Err(Error::FluxNotQuantized { axis_a: j, axis_b: k, flux });
                }
            }
        }
    }

    // resolution rule
    let field = spec.field_at(&spec.reference_point());
    for k in 0..d {
        let involved = (0..d).any(|j| field[(k, j)] != 0.0);
        if involved && mu > 0.0 {
            let ell = (h / mu).sqrt();
            if ell / spacing[k] < grid.points_per_length {
                return Err(Error::GridTooCoarse(format!(
                    "axis {k}: {:.3} sites per magnetic length, need {}",
                    ell / spacing[k],
                    grid.points_per_length
                )));
            }
        }
    }

    // axis order: smallest axis fastest
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by_key(|&k| grid.n[k]);
    let mut stride = vec![0usize; d];
    let mut s = 1;
    for &k in &axes {
        stride[k] = s;
        s *= grid.n[k];
    }
    let total = s;
    let index = |idx: &[usize]| -> usize {
        (0..d)
            .map(|k| stride[k] * if bc[k] == Periodic { fold(idx[k], grid.n[k]) } else { idx[k] })
            .sum()
    };

    let mut sites = vec![0.0; total * d];
    let mut diagonal = vec![0.0; total];
    let hop: Vec<f64> = (0..d).map(|k| h * h * ginv[k] / (spacing[k] * spacing[k])).collect();
    let kinetic: f64 = hop.iter().map(|t| 2.0 * t).sum();
    let mut links = Vec::with_capacity(total * d);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut min_v = f64::INFINITY;
    for _ in 0..total {
        for k in 0..d {
            x[k] = coord(k, idx[k]);
        }
        let me = index(&idx);
        sites[me * d..(me + 1) * d].copy_from_slice(&x);
        let v = spec.potential_at(&x);
        min_v = min_v.min(v);
        diagonal[me] = v + kinetic;
        for j in 0..d {
            let wraps = idx[j] + 1 == grid.n[j];
            if wraps && bc[j] == Dirichlet {
                continue;
            }
            let mut mid = x.clone();
            mid[j] += 0.5 * spacing[j];
            let vj = spec.vector_potential_at(&mid)[j];
            let mut angle = -mu / h * spacing[j] * vj;
            let mut nb = idx.clone();
            if wraps {
                nb[j] = 0;
                // ψ(x + L e_j) = e^{iμχ_j(x)/h} ψ(x), χ_j(x) = L_j Σ_k B[k][j] x_k
                let b = jac.as_ref().expect("checked above");
                let chi: f64 = (0..d)
                    .map(|k| b[k][j] * if k == j { coord(k, 0) } else { x[k] })
                    .sum::<f64>()
                    * length[j];
                angle += mu / h * chi;
            } else {
                nb[j] += 1;
            }
            links.push(Link { from: me, to: index(&nb), axis: j, phase: C64::from_polar(1.0, angle) });
        }
        for k in 0..d {
            idx[k] += 1;
            if idx[k] < grid.n[k] {
                break;
            }
            idx[k] = 0;
        }
    }

    if let Some(e) = grid.resolution_energy {
        if e > min_v {
            let lambda = h / (e - min_v).sqrt();
            for k in 0..d {
                let per = lambda * ginv[k].sqrt() / spacing[k];
                if per < grid.points_per_length {
                    return Err(Error::GridTooCoarse(format!(
                        "axis {k}: {per:.3} sites per de Broglie length, need {}",
                        grid.points_per_length
                    )));
                }
            }
        }
    }

    let matrix = build_matrix(total, &diagonal, &hop, &links);
    Ok(LatticeOperator { d, n: grid.n.clone(), spacing, bc: bc.to_vec(), hop, links, diagonal, sites, matrix })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Lattice,
    Separable,
}

#[derive(Clone, Debug)]
pub struct OracleSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<Vec<Vec<C64>>>,
    /// Every eigenvalue ≤ certified_max is present in `eigenvalues`.
    pub certified_max: f64,
    pub source: SpectrumSource,
    pub solver: SolverKind,
    pub worst_residual: f64,
}

impl OracleSpectrum {
    /// #{λ ≤ τ}.
    pub fn counting(&self, tau: f64) -> Result<usize> {
        if tau > self.certified_max {
            return Err(Error::UncertifiedTau { tau, certified: self.certified_max });
        }
        Ok(self.eigenvalues.partition_point(|&l| l <= tau))
    }
}

/// Σ_{λ_k ≤ τ} Σ_x |u_k(x)|²ψ(x).
pub fn weighted_counting(op: &LatticeOperator, spectrum: &OracleSpectrum, psi: &Cutoff, tau: f64) -> Result<f64> {
    let count = spectrum.counting(tau)?;
    let vecs = spectrum
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("weighted counting needs eigenvectors".into()))?;
    let w: Vec<f64> = (0..op.len()).map(|i| psi.eval(op.site(i))).collect();
    Ok(vecs[..count]
        .iter()
        .map(|u| u.iter().zip(&w).map(|(c, wi)| c.norm_sqr() * wi).sum::<f64>())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Poly, ScalarField};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn free_1d(h: f64, v: ScalarField) -> OperatorSpec {
        let mut spec = OperatorSpec::constant(DMatrix::zeros(1, 1), 0.0, 1.0, h);
        spec.potential = v;
        spec
    }

    fn torus_spec(mu: f64, h: f64) -> OperatorSpec {
        let mut f = DMatrix::zeros(2, 2);
        f[(0, 1)] = 1.0;
        f[(1, 0)] = -1.0;
        OperatorSpec::constant(f, 0.0, mu, h)
    }

    fn torus_grid(phi: f64, mu: f64, h: f64, n: usize) -> GridConfig {
        let side = (2.0 * PI * h * phi / mu).sqrt();
        GridConfig::new(vec![0.0, 0.0], vec![side, side], vec![n, n])
    }

    #[test]
    fn free_periodic_matches_dispersion() {
        let (n, h) = (24, 0.3);
        let spec = free_1d(h, ScalarField::Constant(0.0));
        let op = assemble(&spec, &GridConfig::new(vec![0.0], vec![2.0], vec![n]), Boundary::Periodic).unwrap();
        let spec_out = eigensolve(&op, Target::Lowest(n), &SolverConfig::default()).unwrap();
        let dx = 2.0 / n as f64;
        let mut want: Vec<f64> =
            (0..n).map(|k| 2.0 * h * h / (dx * dx) * (1.0 - (2.0 * PI * k as f64 / n as f64).cos())).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in spec_out.eigenvalues.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_field_is_real_laplacian() {
        let mut spec = torus_spec(1.0, 0.2);
        spec.field = MagneticField::Constant(vec![vec![0.0; 2]; 2]);
        spec.potential = ScalarField::Polynomial(Poly::linear(0, 0.5).term(1.0, &[0, 2]));
        let op = assemble(&spec, &GridConfig::new(vec![-1.0; 2], vec![1.0; 2], vec![7, 5]), Boundary::Dirichlet)
            .unwrap();
        assert!(op.matrix.val.iter().all(|v| v.im == 0.0));
        for l in &op.links {
            assert_eq!(l.phase, C64::new(1.0, 0.0));
        }
        for i in 0..op.len() {
            let x = op.site(i);
            let want = 0.5 * x[0] + x[1] * x[1] + 2.0 * op.hop[0] + 2.0 * op.hop[1];
            assert_eq!(op.matrix.get(i, i).re, want);
        }
    }

    #[test]
    fn assembled_matrix_is_hermitian() {
        let op = assemble(&torus_spec(4.0, 0.25), &torus_grid(3.0, 4.0, 0.25, 36), Boundary::Periodic).unwrap();
        assert!(op.matrix.hermitian_residual() <= 1e-12 * op.matrix.norm_inf());
    }

    #[test]
    fn plaquette_flux_is_uniform_on_the_torus() {
        let (mu, h, phi) = (4.0, 0.25, 3.0);
        let n = 36;
        let op = assemble(&torus_spec(mu, h), &torus_grid(phi, mu, h, n), Boundary::Periodic).unwrap();
        let angles = op.plaquette_angles(0, 1);
        assert_eq!(angles.len(), n * n);
        let want = -2.0 * PI * phi / (n * n) as f64;
        for a in angles {
            assert!((a - want).abs() < 1e-10, "{a} vs {want}");
        }
    }

    #[test]
    fn fractional_flux_rejected() {
        let err = assemble(&torus_spec(4.0, 0.25), &torus_grid(2.5, 4.0, 0.25, 24), Boundary::Periodic).unwrap_err();
        assert!(matches!(err, Error::FluxNotQuantized { .. }));
    }

    #[test]
    fn coarse_grid_rejected() {
        let err = assemble(&torus_spec(4.0, 0.25), &torus_grid(9.0, 4.0, 0.25, 16), Boundary::Periodic).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse(_)));
    }

    #[test]
    fn folded_ordering_keeps_band_narrow() {
        let op = assemble(&torus_spec(4.0, 0.25), &torus_grid(1.0, 4.0, 0.25, 32), Boundary::Periodic).unwrap();
        assert!(op.matrix.bandwidth() <= 2 * 32, "{}", op.matrix.bandwidth());
    }

    #[test]
    fn torus_lowest_cluster_has_flux_multiplicity() {
        let (mu, h, phi) = (2.0, 0.5, 4.0);
        let op = assemble(&torus_spec(mu, h), &torus_grid(phi, mu, h, 42), Boundary::Periodic).unwrap();
        let s = eigensolve(&op, Target::Lowest(8), &SolverConfig::default()).unwrap();
        let ev = &s.eigenvalues;
        let ml = mu * h;
        for v in &ev[..4] {
            assert!((v - ml).abs() < 0.02 * ml, "{v}");
        }
        assert!(ev[3] - ev[0] < 1e-6 * ml);
        assert!(ev[4] > 2.5 * ml);
    }

    #[test]
    fn harmonic_oscillator_refines_at_second_order() {
        let h = 0.1;
        let v = ScalarField::Polynomial(Poly::constant(0.0).term(1.0, &[2]));
        let spec = free_1d(h, v);
        let lowest = |n: usize| {
            let op = assemble(&spec, &GridConfig::new(vec![-4.0], vec![4.0], vec![n]), Boundary::Dirichlet).unwrap();
            eigensolve(&op, Target::Lowest(3), &SolverConfig::default()).unwrap().eigenvalues
        };
        let (a, b, c) = (lowest(199), lowest(399), lowest(799));
        for m in 0..3 {
            let exact = (2 * m + 1) as f64 * h;
            assert!((c[m] - exact).abs() < 1e-4, "{} vs {exact}", c[m]);
            let ratio = (a[m] - b[m]) / (b[m] - c[m]);
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn weighted_counting_normalisation() {
        let (mu, h, phi) = (2.0, 0.5, 2.0);
        let op = assemble(&torus_spec(mu, h), &torus_grid(phi, mu, h, 32), Boundary::Periodic).unwrap();
        let s = eigensolve(&op, Target::Below(2.0 * mu * h), &SolverConfig::default()).unwrap();
        let tau = 2.0 * mu * h;
        let one = weighted_counting(&op, &s, &Cutoff::One, tau).unwrap();
        assert!((one - 2.0).abs() < 1e-8, "{one}");
        assert_eq!(weighted_counting(&op, &s, &Cutoff::Zero, tau).unwrap(), 0.0);
        assert!(matches!(
            weighted_counting(&op, &s, &Cutoff::One, 10.0),
            Err(Error::UncertifiedTau { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn gauge_transform_preserves_spectrum(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut spec = torus_spec(1.0, 0.2);
            spec.potential = ScalarField::Polynomial(Poly::constant(0.0).term(0.5, &[2, 0]).term(0.3, &[0, 2]));
            let op = assemble(&spec, &GridConfig::new(vec![-1.0; 2], vec![1.0; 2], vec![36, 38]), Boundary::Dirichlet)
                .unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let theta: Vec<f64> = (0..op.len()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let g = op.gauge_transformed(&theta);
            let cfg = SolverConfig { dense_max: 0, ..Default::default() };
            let a = eigensolve(&op, Target::Lowest(12), &cfg).unwrap().eigenvalues;
            let b = eigensolve(&g, Target::Lowest(12), &cfg).unwrap().eigenvalues;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10, "{} vs {}", x, y);
            }
        }

        #[test]
        fn counting_is_right_continuous_step(tau in -1.0f64..3.0) {
            let h = 0.2;
            let v = ScalarField::Polynomial(Poly::constant(-1.0).term(1.0, &[2]));
            let op = assemble(&free_1d(h, v), &GridConfig::new(vec![-3.0], vec![3.0], vec![120]), Boundary::Dirichlet)
                .unwrap();
            let s = eigensolve(&op, Target::Lowest(120), &SolverConfig::default()).unwrap();
            let n = s.counting(tau).unwrap();
            prop_assert!(n == 0 || s.eigenvalues[n - 1] <= tau);
            prop_assert!(n == s.eigenvalues.len() || s.eigenvalues[n] > tau);
        }
    }
}
