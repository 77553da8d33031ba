use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{diagonal_metric, OracleSpectrum, SolverKind, SpectrumSource};
use crate::error::{Error, Result};
use crate::field_geometry::{eigenstructure_of, Cutoff, MagneticField, OperatorSpec, DEFAULT_EPS0, DEFAULT_EPS_GROUP};
use crate::linalg::Tridiagonal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableConfig {
    /// Dirichlet interval on the kernel axis.
    pub lo: f64,
    pub hi: f64,
    /// Interior points of the 1D grid; derived from `points_per_length` when absent.
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default = "default_ppl")]
    pub points_per_length: f64,
    /// Flux quanta Φ_j per magnetic pair on a torus; None means the plane.
    #[serde(default)]
    pub flux: Option<Vec<u64>>,
}

fn default_ppl() -> f64 {
    32.0
}

impl SeparableConfig {
    pub fn new(lo: f64, hi: f64) -> Self {
        SeparableConfig { lo, hi, points: None, points_per_length: default_ppl(), flux: None }
    }
}

/// Tensor spectrum {Σ(2α_j+1)f_jμh + ν_m}.
#[derive(Clone, Debug)]
pub struct SeparableSpectrum {
    pub kernel_axis: usize,
    pub f: Vec<f64>,
    /// Landau energies, one per multi-index, ascending.
    pub landau: Vec<f64>,
    /// 1D eigenvalues ν_m of h²g^{kk}D² + V, ascending.
    pub nu: Vec<f64>,
    /// ℓ²-normalised 1D eigenvectors.
    pub nu_vectors: Vec<Vec<f64>>,
    pub grid: Vec<f64>,
    /// States per unit area per Landau multi-index: Π μf_j/(2πh) · det(g_plane)^{-1/2}.
    pub plane_density: f64,
    /// Π Φ_j on a torus.
    pub degeneracy: Option<u64>,
    /// Distinct tensor energies ≤ τ (no degeneracy repetition).
    pub spectrum: OracleSpectrum,
}

impl SeparableSpectrum {
    fn check(&self, tau: f64) -> Result<()> {
        if tau > self.spectrum.certified_max {
            return Err(Error::UncertifiedTau { tau, certified: self.spectrum.certified_max });
        }
        Ok(())
    }

    /// #{ν_m ≤ e}.
    pub fn nu_counting(&self, e: f64) -> usize {
        self.nu.partition_point(|&v| v <= e)
    }

    /// Eigenvalue count on the torus, Π Φ_j · Σ_α #{ν_m ≤ τ − E_α}.
    pub fn counting(&self, tau: f64) -> Result<u64> {
        self.check(tau)?;
        let deg = self
            .degeneracy
            .ok_or_else(|| Error::NotSeparable("counting needs torus flux; use weighted counting on the plane".into()))?;
        Ok(deg * self.landau.iter().map(|&e| self.nu_counting(tau - e) as u64).sum::<u64>())
    }

    /// ∫ e(x,x,τ)ψ(x) dx on the plane, with ψ's marginal along the kernel axis in closed form.
    pub fn weighted_counting(&self, psi: &Cutoff, tau: f64) -> Result<f64> {
        self.check(tau)?;
        let d = self.f.len() * 2 + 1;
        let k = self.kernel_axis;
        let marginal: Vec<f64> = match psi {
            Cutoff::Zero => return Ok(0.0),
            Cutoff::One => return Err(Error::InvalidSpec("plane weighted counting needs a compact cutoff".into())),
            Cutoff::Bump { center, .. } => {
                self.grid.iter().map(|&x| psi.marginal(d - 1, (x - center[k]) * (x - center[k]))).collect()
            }
        };
        let mut prefix = vec![0.0; self.nu.len() + 1];
        for (m, u) in self.nu_vectors.iter().enumerate() {
            prefix[m + 1] = prefix[m] + u.iter().zip(&marginal).map(|(a, w)| a * a * w).sum::<f64>();
        }
        Ok(self.plane_density * self.landau.iter().map(|&e| prefix[self.nu_counting(tau - e)]).sum::<f64>())
    }
}

fn landau_levels(f: &[f64], mu_h: f64, e_max: f64) -> Vec<f64> {
    fn rec(f: &[f64], mu_h: f64, acc: f64, e_max: f64, out: &mut Vec<f64>) {
        if f.is_empty() {
            out.push(acc);
            return;
        }
        let mut a = 0;
        loop {
            let e = acc + (2 * a + 1) as f64 * f[0] * mu_h;
            let rest_min: f64 = f[1..].iter().map(|fj| fj * mu_h).sum();
            if e + rest_min > e_max {
                break;
            }
            rec(&f[1..], mu_h, e, e_max, out);
            a += 1;
        }
    }
    let mut out = Vec::new();
    rec(f, mu_h, 0.0, e_max, &mut out);
    out.sort_by(f64::total_cmp);
    out
}

/// Exact tensor oracle for a constant field whose kernel is one coordinate
/// axis carrying all of the potential's dependence.
pub fn separable_oracle(spec: &OperatorSpec, cfg: &SeparableConfig, tau: f64) -> Result<SeparableSpectrum> {
    spec.validate()?;
    let d = spec.d;
    if !matches!(spec.field, MagneticField::Constant(_)) && !spec.field_is_constant() {
        return Err(Error::NotSeparable("field is not constant".into()));
    }
    let ginv = diagonal_metric(spec).map_err(|e| Error::NotSeparable(e.to_string()))?;
    let x0 = spec.reference_point();
    let field = spec.field_at(&x0);
    let eig = eigenstructure_of(&spec.metric_at(&x0), &field, DEFAULT_EPS0, DEFAULT_EPS_GROUP)?;
    if eig.q != 1 {
        return Err(Error::NotSeparable(format!("kernel dimension {} (only q = 1 is supported)", eig.q)));
    }
    let zero_rows: Vec<usize> = (0..d).filter(|&k| (0..d).all(|j| field[(k, j)] == 0.0)).collect();
    if zero_rows.len() != 1 {
        return Err(Error::NotSeparable("field kernel is not a coordinate axis".into()));
    }
    let k = zero_rows[0];
    if let Some(j) = (0..d).find(|&j| j != k && spec.potential.depends_on(j)) {
        return Err(Error::NotSeparable(format!("potential depends on magnetic axis {j}")));
    }
    if let Some(flux) = &cfg.flux {
        if flux.len() != eig.r || flux.contains(&0) {
            return Err(Error::InvalidSpec(format!("flux needs {} positive entries", eig.r)));
        }
    }
    if !(cfg.hi > cfg.lo) {
        return Err(Error::InvalidSpec("kernel interval needs hi > lo".into()));
    }

    let (mu, h) = (spec.mu, spec.h);
    let mut point = x0.clone();
    let pot = |x: f64, p: &mut Vec<f64>| {
        p[k] = x;
        spec.potential_at(p)
    };
    let n = match cfg.points {
        Some(n) => n.max(1),
        None => {
            let probe = 2048;
            let min_v = (0..=probe)
                .map(|i| pot(cfg.lo + (cfg.hi - cfg.lo) * i as f64 / probe as f64, &mut point))
                .fold(f64::INFINITY, f64::min);
            let e = (tau - min_v).max(h);
            let lambda = h * ginv[k].sqrt() / e.sqrt();
            (((cfg.hi - cfg.lo) / lambda * cfg.points_per_length).ceil() as usize).max(16)
        }
    };
    let dx = (cfg.hi - cfg.lo) / (n + 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| cfg.lo + (i + 1) as f64 * dx).collect();
    let c = h * h * ginv[k] / (dx * dx);
    let tri = Tridiagonal {
        diag: grid.iter().map(|&x| 2.0 * c + pot(x, &mut point)).collect(),
        off: vec![-c; n.saturating_sub(1)],
    };

    let mu_h = mu * h;
    let e0: f64 = eig.f.iter().map(|fj| fj * mu_h).sum();
    let count = tri.count_below(tau - e0 + 1e-13 * (tau.abs() + 1.0));
    let tol = 1e-14 * (tri.gershgorin().1.abs() + tri.gershgorin().0.abs()).max(1.0);
    let nu: Vec<f64> = (0..count).map(|m| tri.kth_eigenvalue(m, tol)).collect();
    let nu_vectors: Vec<Vec<f64>> = nu.iter().map(|&l| tri.eigenvector(l)).collect();
    let nu_min = nu.first().copied().unwrap_or(f64::INFINITY);
    let landau = landau_levels(&eig.f, mu_h, tau - nu_min);

    let plane_det: f64 = (0..d).filter(|&j| j != k).map(|j| ginv[j]).product();
    let plane_density = eig.f.iter().map(|fj| mu * fj / (2.0 * PI * h)).product::<f64>() / plane_det.sqrt();

    let mut energies: Vec<f64> =
        landau.iter().flat_map(|&e| nu.iter().map(move |&v| e + v)).filter(|&v| v <= tau).collect();
    energies.sort_by(f64::total_cmp);
    let spectrum = OracleSpectrum {
        eigenvalues: energies,
        eigenvectors: None,
        certified_max: tau,
        source: SpectrumSource::Separable,
        solver: SolverKind::Sturm,
        worst_residual: 0.0,
    };
    Ok(SeparableSpectrum {
        kernel_axis: k,
        f: eig.f.clone(),
        landau,
        nu,
        nu_vectors,
        grid,
        plane_density,
        degeneracy: cfg.flux.as_ref().map(|f| f.iter().product()),
        spectrum,
    })
}
