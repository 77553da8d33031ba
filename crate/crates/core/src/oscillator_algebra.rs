//! Truncated Hermite-basis oscillators: ladder operators, Weyl-symmetrised
//! cubic perturbations, the resonant models with their degenerate blocks, and
//! the resonant correction term.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_geometry::OperatorSpec;
use crate::linalg::{hermitian_eigen, CsrMatrix, C64};
use crate::quad::{self, QuadConfig};

pub const DEFAULT_DIM_CAP: usize = 1_000_000;
/// Eigenvector mass allowed on the top two truncation layers.
pub const CERTIFY_MASS: f64 = 1e-8;

const ONE: C64 = C64::new(1.0, 0.0);

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Ladder operators on ⊗_j span{|0⟩, …, |n_max−1⟩}; flat index has the last mode fastest.
#[derive(Clone, Debug)]
pub struct LadderAlgebra {
    pub r: usize,
    pub n_max: usize,
    pub hbar: f64,
    pub dim: usize,
    pub lowering: Vec<CsrMatrix>,
    pub raising: Vec<CsrMatrix>,
    pub number: Vec<CsrMatrix>,
}

impl LadderAlgebra {
    pub fn build(r: usize, n_max: usize, hbar: f64) -> Result<Self> {
        Self::build_capped(r, n_max, hbar, DEFAULT_DIM_CAP)
    }

    pub fn build_capped(r: usize, n_max: usize, hbar: f64, cap: usize) -> Result<Self> {
        if n_max < 2 || r == 0 {
            return Err(Error::InvalidSpec(format!("need r >= 1 and n_max >= 2, got r={r}, n_max={n_max}")));
        }
        if !(hbar > 0.0) {
            return Err(Error::InvalidSpec(format!("hbar must be positive, got {hbar}")));
        }
        let dim = (0..r).try_fold(1usize, |acc, _| acc.checked_mul(n_max)).filter(|&d| d <= cap);
        let dim = dim.ok_or(Error::DimensionOverflow { dim: (n_max as f64).powi(r as i32) as usize, cap })?;
        let mut alg = LadderAlgebra { r, n_max, hbar, dim, lowering: vec![], raising: vec![], number: vec![] };
        for j in 0..r {
            let stride = alg.stride(j);
            let mut t = Vec::new();
            let mut nt = Vec::with_capacity(dim);
            for flat in 0..dim {
                let a = (flat / stride) % n_max;
                if a > 0 {
                    t.push((flat - stride, flat, re((a as f64).sqrt())));
                }
                nt.push((flat, flat, re(a as f64)));
            }
            let low = CsrMatrix::from_triplets(dim, t);
            alg.raising.push(low.adjoint());
            alg.lowering.push(low);
            alg.number.push(CsrMatrix::from_triplets(dim, nt));
        }
        Ok(alg)
    }

    fn stride(&self, j: usize) -> usize {
        self.n_max.pow((self.r - 1 - j) as u32)
    }

    pub fn index(&self, alpha: &[usize]) -> usize {
        alpha.iter().fold(0, |acc, &a| acc * self.n_max + a)
    }

    pub fn alpha(&self, mut flat: usize) -> Vec<usize> {
        let mut a = vec![0; self.r];
        for j in (0..self.r).rev() {
            a[j] = flat % self.n_max;
            flat /= self.n_max;
        }
        a
    }

    /// α_j < n_max − 1 for all j.
    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.dim).map(|i| self.alpha(i).iter().all(|&a| a + 1 < self.n_max)).collect()
    }

    /// Some α_j ≥ n_max − 2.
    pub fn top_layers_mask(&self) -> Vec<bool> {
        (0..self.dim).map(|i| self.alpha(i).iter().any(|&a| a + 2 >= self.n_max)).collect()
    }

    /// x_j = √(ℏ/2)(a_j + a_j†)
    pub fn position(&self, j: usize) -> CsrMatrix {
        let s = re((self.hbar / 2.0).sqrt());
        CsrMatrix::linear_combination(&[(s, &self.lowering[j]), (s, &self.raising[j])])
    }

    /// p_j = i√(ℏ/2)(a_j† − a_j)
    pub fn momentum(&self, j: usize) -> CsrMatrix {
        let s = C64::new(0.0, (self.hbar / 2.0).sqrt());
        CsrMatrix::linear_combination(&[(s, &self.raising[j]), (-s, &self.lowering[j])])
    }

    /// L_k for k < 2r: positions first, then momenta.
    pub fn quadrature(&self, k: usize) -> CsrMatrix {
        if k < self.r {
            self.position(k)
        } else {
            self.momentum(k - self.r)
        }
    }

    /// Σ f_j (2N_j + 1) ℏ
    pub fn harmonic(&self, f: &[f64]) -> CsrMatrix {
        let d: Vec<C64> = (0..self.dim)
            .map(|i| re(self.hbar * self.alpha(i).iter().zip(f).map(|(&a, &fj)| (2 * a + 1) as f64 * fj).sum::<f64>()))
            .collect();
        CsrMatrix::diagonal(&d)
    }

    /// max_{j,k} |[a_j, a_k†] − δ_jk I| over the interior block.
    pub fn commutator_defect(&self) -> f64 {
        let mask = self.interior_mask();
        let id = CsrMatrix::identity(self.dim);
        let mut worst = 0.0f64;
        for j in 0..self.r {
            for k in 0..self.r {
                let c = self.lowering[j].commutator(&self.raising[k]);
                let c = if j == k { CsrMatrix::linear_combination(&[(ONE, &c), (-ONE, &id)]) } else { c };
                worst = worst.max(c.max_abs_restricted(&mask));
            }
        }
        worst
    }
}

/// Σ_{α ∈ group} eigen-decomposition helper: dense sub-block of `m` on `idx`.
fn sub_block(m: &CsrMatrix, idx: &[usize]) -> DMatrix<C64> {
    let mut pos = std::collections::HashMap::with_capacity(idx.len());
    for (p, &i) in idx.iter().enumerate() {
        pos.insert(i, p);
    }
    let mut b = DMatrix::zeros(idx.len(), idx.len());
    for (p, &i) in idx.iter().enumerate() {
        for (j, v) in m.row(i) {
            if let Some(&q) = pos.get(&j) {
                b[(p, q)] += v;
            }
        }
    }
    b
}

/// β_{jkm} L_j L_k L_m with indices into the quadratures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicTerm {
    pub indices: [usize; 3],
    pub coeff: f64,
}

#[derive(Clone, Debug)]
pub struct PerturbedOscillator {
    pub f: Vec<f64>,
    pub hbar: f64,
    pub mu: f64,
    pub n_max: usize,
    pub algebra: LadderAlgebra,
    pub matrix: CsrMatrix,
}

/// 𝐚 = Σ f_j(2N_j+1)ℏ + μ⁻¹ Σ β (L L L)^w [+ C₀ μ⁻² 𝓐₀²].
pub fn build_perturbed(
    f: &[f64],
    hbar: f64,
    b: &[CubicTerm],
    mu: f64,
    n_max: usize,
    stabilizer: Option<f64>,
) -> Result<PerturbedOscillator> {
    if f.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidSpec("intensities must be positive".into()));
    }
    let alg = LadderAlgebra::build(f.len(), n_max, hbar)?;
    let a0 = alg.harmonic(f);
    let quads: Vec<CsrMatrix> = (0..2 * alg.r).map(|k| alg.quadrature(k)).collect();
    let mut terms: Vec<(C64, CsrMatrix)> = vec![(ONE, a0.clone())];
    for t in b {
        if t.indices.iter().any(|&k| k >= 2 * alg.r) {
            return Err(Error::InvalidSpec(format!("cubic index out of range: {:?}", t.indices)));
        }
        let [i, j, k] = t.indices;
        let perms = [[i, j, k], [i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]];
        for p in perms {
            let prod = quads[p[0]].matmul(&quads[p[1]]).matmul(&quads[p[2]]);
            terms.push((re(t.coeff / (6.0 * mu)), prod));
        }
    }
    if let Some(c0) = stabilizer {
        terms.push((re(c0 / (mu * mu)), a0.matmul(&a0)));
    }
    let refs: Vec<(C64, &CsrMatrix)> = terms.iter().map(|(c, m)| (*c, m)).collect();
    let matrix = CsrMatrix::linear_combination(&refs);
    let res = matrix.hermitian_residual();
    if res > 1e-10 {
        return Err(Error::NotHermitian(res));
    }
    Ok(PerturbedOscillator { f: f.to_vec(), hbar, mu, n_max, algebra: alg, matrix })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSpectrum {
    pub eigenvalues: Vec<f64>,
    pub top_layer_mass: Vec<f64>,
    /// Eigenvalues strictly below this are certified; +∞ when all are.
    pub certified_below: f64,
}

impl TruncatedSpectrum {
    pub fn count_below(&self, tau: f64) -> Result<usize> {
        if tau > self.certified_below {
            return Err(Error::TruncationUnreliable { tau, certified: self.certified_below });
        }
        Ok(self.eigenvalues.iter().filter(|&&e| e < tau).count())
    }
}

pub fn truncated_spectrum(op: &PerturbedOscillator) -> TruncatedSpectrum {
    let (vals, vecs) = hermitian_eigen(op.matrix.to_dense(), true);
    let vecs = vecs.expect("eigenvectors requested");
    let top = op.algebra.top_layers_mask();
    let mass: Vec<f64> = (0..vals.len())
        .map(|c| (0..vals.len()).filter(|&i| top[i]).map(|i| vecs[(i, c)].norm_sqr()).sum())
        .collect();
    let certified_below =
        vals.iter().zip(&mass).filter(|(_, &m)| m >= CERTIFY_MASS).map(|(&v, _)| v).fold(f64::INFINITY, f64::min);
    TruncatedSpectrum { eigenvalues: vals, top_layer_mass: mass, certified_below }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ResonantVariant {
    /// f = (2, 1), coupling a₁†a₂² + h.c.
    R2,
    /// f₁ = f₂ + f₃, f₂ ≠ f₃, coupling a₁†a₂a₃ + h.c.
    R3 { f: [f64; 3] },
}

impl ResonantVariant {
    pub fn r3_default() -> Self {
        ResonantVariant::R3 { f: [3.0, 2.0, 1.0] }
    }

    pub fn intensities(&self) -> Vec<f64> {
        match self {
            ResonantVariant::R2 => vec![2.0, 1.0],
            ResonantVariant::R3 { f } => f.to_vec(),
        }
    }

    fn default_target(&self) -> Vec<usize> {
        match self {
            ResonantVariant::R2 => vec![1, 0],
            ResonantVariant::R3 { .. } => vec![1, 0, 0],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResonantModel {
    pub variant: ResonantVariant,
    pub f: Vec<f64>,
    pub omega: f64,
    pub mu: f64,
    pub h: f64,
    pub algebra: LadderAlgebra,
    pub a0: CsrMatrix,
    pub m0: CsrMatrix,
    /// V = −Σ(2ᾱ_j+1) f_j μh for the chosen target ᾱ.
    pub v: f64,
}

pub fn build_resonant_model(variant: ResonantVariant, omega: f64, mu: f64, h: f64, n_max: usize) -> Result<ResonantModel> {
    let f = variant.intensities();
    if let ResonantVariant::R3 { f } = variant {
        if f.iter().any(|&x| !(x > 0.0)) || (f[0] - f[1] - f[2]).abs() > 1e-12 * f[0] || f[1] == f[2] {
            return Err(Error::InvalidSpec(format!("r3 needs f1 = f2 + f3 and f2 != f3, got {f:?}")));
        }
    }
    let hbar = mu * h;
    let alg = LadderAlgebra::build(f.len(), n_max, hbar)?;
    let a0 = alg.harmonic(&f);
    let scale = re((2.0 * hbar).powf(1.5));
    let (a, ad) = (&alg.lowering, &alg.raising);
    let m0 = match variant {
        ResonantVariant::R2 => {
            let t = ad[0].matmul(&a[1]).matmul(&a[1]);
            CsrMatrix::linear_combination(&[(scale, &t), (scale, &t.adjoint())])
        }
        ResonantVariant::R3 { .. } => {
            let t = ad[0].matmul(&a[1]).matmul(&a[2]);
            CsrMatrix::linear_combination(&[(scale, &t), (scale, &t.adjoint())])
        }
    };
    let target = variant.default_target();
    let v = -hbar * target.iter().zip(&f).map(|(&a, &fj)| (2 * a + 1) as f64 * fj).sum::<f64>();
    Ok(ResonantModel { variant, f, omega, mu, h, algebra: alg, a0, m0, v })
}

/// One degenerate level of A₀ + V with the eigenvalues e_i of μ⁻¹ωM₀ on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelBlock {
    pub energy: f64,
    pub states: Vec<Vec<usize>>,
    pub shifts: Vec<f64>,
    /// False when a state sits on the top two truncation layers.
    pub complete: bool,
}

impl ResonantModel {
    pub fn with_target(mut self, alpha: &[usize]) -> Self {
        self.v = -self.mu * self.h * alpha.iter().zip(&self.f).map(|(&a, &fj)| (2 * a + 1) as f64 * fj).sum::<f64>();
        self
    }

    pub fn hbar(&self) -> f64 {
        self.mu * self.h
    }

    /// Σ f_j α_j; M₀ only couples states of equal weight.
    pub fn conserved_weight(&self, alpha: &[usize]) -> f64 {
        alpha.iter().zip(&self.f).map(|(&a, &fj)| a as f64 * fj).sum()
    }

    pub fn perturbation(&self) -> CsrMatrix {
        self.m0.scaled(re(self.omega / self.mu))
    }

    /// A₀ + V + μ⁻¹ωM₀
    pub fn full_operator(&self) -> CsrMatrix {
        let shift = CsrMatrix::identity(self.algebra.dim).scaled(re(self.v));
        CsrMatrix::linear_combination(&[(ONE, &self.a0), (ONE, &shift), (ONE, &self.perturbation())])
    }

    /// Levels of A₀ + V, ascending, each with its perturbation eigenvalues.
    pub fn level_blocks(&self) -> Vec<LevelBlock> {
        let alg = &self.algebra;
        let tol = 1e-9 * self.hbar() * self.f.iter().cloned().fold(0.0, f64::max);
        let top = alg.top_layers_mask();
        let mut levels: Vec<(f64, usize)> = (0..alg.dim).map(|i| (self.a0.get(i, i).re + self.v, i)).collect();
        levels.sort_by(|a, b| a.0.total_cmp(&b.0));
        let pert = self.perturbation();
        let mut out = Vec::new();
        let mut k = 0;
        while k < levels.len() {
            let e = levels[k].0;
            let mut idx = vec![];
            while k < levels.len() && (levels[k].0 - e).abs() <= tol {
                idx.push(levels[k].1);
                k += 1;
            }
            idx.sort_unstable();
            let (shifts, _) = hermitian_eigen(sub_block(&pert, &idx), false);
            out.push(LevelBlock {
                energy: e,
                states: idx.iter().map(|&i| alg.alpha(i)).collect(),
                complete: idx.iter().all(|&i| !top[i]),
                shifts,
            });
        }
        out
    }

    /// The block of A₀ + V at energy 0.
    pub fn degenerate_block(&self) -> Result<LevelBlock> {
        let tol = 1e-9 * self.hbar() * self.f.iter().cloned().fold(0.0, f64::max);
        let b = self.level_blocks().into_iter().find(|b| b.energy.abs() <= tol).ok_or(Error::EmptyEigenspace)?;
        if !b.complete {
            return Err(Error::TruncationUnreliable { tau: 0.0, certified: f64::NEG_INFINITY });
        }
        Ok(b)
    }
}

/// #{e_i < lam} for μ⁻¹ωM₀ restricted to the degenerate level.
pub fn restricted_counting_m(model: &ResonantModel, lam: f64) -> Result<usize> {
    Ok(model.degenerate_block()?.shifts.iter().filter(|&&e| e < lam).count())
}

/// C³ step: 0 at t ≤ 0, 1 at t ≥ 1.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
}

pub fn smoothstep_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        140.0 * (t * (1.0 - t)).powi(3)
    }
}

/// 𝓠(z): 1 on |z| ≤ ρ, 0 on |z| ≥ 2ρ.
pub fn z_cutoff(z: f64, rho: f64) -> f64 {
    1.0 - smoothstep((z.abs() - rho) / rho)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    /// Stieltjes evaluation against the τ-cutoff.
    pub stieltjes: f64,
    /// Degenerate-level closed form Σ_{e_i<0} 2min(√|e_i|, ρ) with the same prefactor.
    pub simplified: f64,
    pub discrepancy: f64,
    pub prefactor: f64,
    pub g_at_zero: f64,
    pub g_average: f64,
    pub shifts: Vec<f64>,
    pub rho_cut: f64,
    pub l0: f64,
}

/// 𝓔^MW_corr at the reference point for q = 1.
///
/// `rho_cut` is the plateau radius of 𝓠 and `l0` the width of the τ-cutoff
/// transition, which runs over [−2L₀, −L₀].
pub fn correction_term(spec: &OperatorSpec, model: &ResonantModel, rho_cut: f64, l0: f64) -> Result<CorrectionResult> {
    let r = model.f.len();
    if spec.d != 2 * r + 1 {
        return Err(Error::InvalidQ(spec.d.saturating_sub(2 * r)));
    }
    if (spec.mu - model.mu).abs() > 1e-12 * spec.mu || (spec.h - model.h).abs() > 1e-12 * spec.h {
        return Err(Error::InvalidSpec("operator and resonant model disagree on mu or h".into()));
    }
    if !(rho_cut > 0.0 && l0 > 0.0) {
        return Err(Error::InvalidSpec(format!("rho_cut = {rho_cut} and L0 = {l0} must be positive")));
    }
    let (mu, h, d) = (model.mu, model.h, spec.d as i32);
    let prefactor = (2.0 * PI).powi(r as i32 - d)
        * h.powi(r as i32 - d)
        * mu.powi(r as i32)
        * model.f.iter().product::<f64>()
        * spec.sqrt_g(&spec.reference_point());

    let qcfg = QuadConfig { rel_tol: 1e-13, ..QuadConfig::default() };
    let q_of = |a: f64| -> Result<f64> {
        if a <= 0.0 {
            return Ok(0.0);
        }
        let half = quad::integrate(|z| z_cutoff(z, rho_cut), 0.0, a, &[rho_cut, 2.0 * rho_cut], &qcfg)?;
        Ok(2.0 * half.value)
    };

    let blocks = model.level_blocks();
    let emax = blocks.iter().flat_map(|b| b.shifts.iter()).fold(0.0f64, |m, e| m.max(e.abs()));
    // Levels whose difference can be nonzero for τ' ∈ [−2L₀, 0].
    let lo = -2.0 * l0 - 4.0 * rho_cut * rho_cut - emax;
    let active: Vec<&LevelBlock> = blocks
        .iter()
        .filter(|b| b.energy <= emax && b.energy >= lo && b.shifts.iter().any(|&e| e != 0.0))
        .collect();
    if let Some(b) = active.iter().find(|b| !b.complete) {
        return Err(Error::TruncationUnreliable { tau: b.energy, certified: f64::NEG_INFINITY });
    }

    let failure = std::cell::RefCell::new(None::<Error>);
    let g = |tp: f64| -> f64 {
        let mut s = 0.0;
        for b in &active {
            for &e in &b.shifts {
                let a = q_of((tp - b.energy - e).max(0.0).sqrt());
                let c = q_of((tp - b.energy).max(0.0).sqrt());
                match (a, c) {
                    (Ok(a), Ok(c)) => s += a - c,
                    (Err(err), _) | (_, Err(err)) => {
                        failure.borrow_mut().get_or_insert(err);
                    }
                }
            }
        }
        s
    };
    let g0 = g(0.0);
    let mut breaks = vec![];
    for b in &active {
        breaks.push(b.energy);
        breaks.extend(b.shifts.iter().map(|e| b.energy + e));
    }
    let avg = quad::integrate(
        |tp| g(tp) * smoothstep_derivative((tp + 2.0 * l0) / l0) / l0,
        -2.0 * l0,
        -l0,
        &breaks,
        &QuadConfig { rel_tol: 1e-11, ..QuadConfig::default() },
    )?
    .value;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let stieltjes = prefactor * (g0 - avg);

    let rho_star = model.hbar().sqrt();
    let block = model.degenerate_block()?;
    let simplified =
        prefactor * block.shifts.iter().filter(|&&e| e < 0.0).map(|&e| 2.0 * e.abs().sqrt().min(rho_star)).sum::<f64>();
    let discrepancy = if simplified == 0.0 {
        if stieltjes == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((stieltjes - simplified) / simplified).abs()
    };
    Ok(CorrectionResult {
        stieltjes,
        simplified,
        discrepancy,
        prefactor,
        g_at_zero: g0,
        g_average: avg,
        shifts: block.shifts,
        rho_cut,
        l0,
    })
}
