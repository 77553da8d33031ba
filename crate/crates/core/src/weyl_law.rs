//! Magnetic Weyl density, its ultrastrong specialisation, ∫𝓔^MW ψ, and
//! coefficient mollification with the ε-schedules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GriddedField, UniformGrid};
use crate::field_geometry::{
    compute_eigenstructure, eigenstructure_at, unit_ball_volume, Cutoff, FieldEigenstructure, OperatorSpec,
    DEFAULT_EPS0, DEFAULT_EPS_GROUP,
};
use crate::quad::{self, QuadConfig, QuadResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylEvaluation {
    pub value: f64,
    /// Componentwise cap on α used by the enumeration.
    pub alpha_max: Vec<usize>,
    pub terms_used: usize,
    pub tau: f64,
    /// None for integrated values.
    pub point: Option<Vec<f64>>,
    /// W = V + μhΣf_j, reported by the ultrastrong density.
    pub w: Option<f64>,
}

/// (x)₊^{q/2}
pub fn positive_power(x: f64, q: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if q % 2 == 0 {
        x.powi((q / 2) as i32)
    } else {
        x.sqrt() * x.powi((q / 2) as i32)
    }
}

/// Σ_{α ≤ caps} (e − Σ(2α_j+1) f_j ℏ)₊^{q/2}; returns (sum, number of positive terms).
pub fn landau_sum_capped(f: &[f64], hbar: f64, e: f64, q: usize, caps: &[usize]) -> (f64, usize) {
    fn rec(f: &[f64], hbar: f64, rest: f64, q: usize, caps: &[usize], acc: &mut f64, n: &mut usize) {
        if f.is_empty() {
            if rest > 0.0 {
                *acc += positive_power(rest, q);
                *n += 1;
            }
            return;
        }
        for a in 0..=caps[0] {
            let r = rest - (2 * a + 1) as f64 * f[0] * hbar;
            if r <= 0.0 {
                break;
            }
            rec(&f[1..], hbar, r, q, &caps[1..], acc, n);
        }
    }
    let mut acc = 0.0;
    let mut n = 0;
    rec(f, hbar, e, q, caps, &mut acc, &mut n);
    (acc, n)
}

/// Caps beyond which every term vanishes: α_j < e/(2 f_j ℏ).
pub fn landau_caps(f: &[f64], hbar: f64, e: f64) -> Vec<usize> {
    f.iter()
        .map(|&fj| if e <= 0.0 { 0 } else { (e / (2.0 * fj * hbar)).floor() as usize })
        .collect()
}

fn prefactor(spec: &OperatorSpec, eig: &FieldEigenstructure, x: &[f64]) -> f64 {
    let r = eig.r as i32;
    let d = spec.d as i32;
    unit_ball_volume(eig.q) * (2.0 * PI).powi(r - d) * spec.mu.powi(r) * spec.h.powi(r - d) * spec.sqrt_g(x)
        * eig.product_f()
}

/// 𝓔^MW(x, τ) = ω_q (2π)^{r−d} μ^r h^{r−d} √g Πf Σ_α (τ − Σ(2α_j+1)f_jμh − V)₊^{q/2}.
pub fn weyl_density(spec: &OperatorSpec, eig: &FieldEigenstructure, x: &[f64], tau: f64) -> Result<WeylEvaluation> {
    if eig.q == 0 {
        return Err(Error::InvalidQ(eig.q));
    }
    let hbar = spec.mu * spec.h;
    let e = tau - spec.potential_at(x);
    let caps = landau_caps(&eig.f, hbar, e);
    let (sum, terms) = landau_sum_capped(&eig.f, hbar, e, eig.q, &caps);
    let value = if sum == 0.0 { 0.0 } else { prefactor(spec, eig, x) * sum };
    Ok(WeylEvaluation { value, alpha_max: caps, terms_used: terms, tau, point: Some(x.to_vec()), w: None })
}

/// α = 0 term only; requires μh ≥ `c0`.
pub fn ultrastrong_density(
    spec: &OperatorSpec,
    eig: &FieldEigenstructure,
    x: &[f64],
    tau: f64,
    c0: f64,
) -> Result<WeylEvaluation> {
    if eig.q == 0 {
        return Err(Error::InvalidQ(eig.q));
    }
    let hbar = spec.mu * spec.h;
    if hbar < c0 {
        return Err(Error::InvalidSpec(format!("ultrastrong density needs mu*h = {hbar} >= {c0}")));
    }
    let w = spec.potential_at(x) + hbar * eig.f.iter().sum::<f64>();
    let t = positive_power(tau - w, eig.q);
    let value = if t == 0.0 { 0.0 } else { prefactor(spec, eig, x) * t };
    Ok(WeylEvaluation {
        value,
        alpha_max: vec![0; eig.r],
        terms_used: usize::from(t > 0.0),
        tau,
        point: Some(x.to_vec()),
        w: Some(w),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylQuadConfig {
    pub rel_tol: f64,
    /// Cap on tensor midpoint nodes for multi-axis integrands.
    pub max_points: usize,
    pub eps0: f64,
    pub eps_group: f64,
}

impl Default for WeylQuadConfig {
    fn default() -> Self {
        WeylQuadConfig { rel_tol: 1e-10, max_points: 1 << 24, eps0: DEFAULT_EPS0, eps_group: DEFAULT_EPS_GROUP }
    }
}

/// ∫ 𝓔^MW(x, τ) ψ(x) dx.
///
/// The radial bump is integrated in closed form along every axis on which the
/// metric, field and potential are constant; the remaining axes use adaptive
/// Gauss–Kronrod (one axis) or tensor midpoint with Richardson extrapolation.
pub fn weyl_integral(spec: &OperatorSpec, tau: f64, cfg: &WeylQuadConfig) -> Result<QuadResult> {
    let (center, radius) = match &spec.cutoff {
        Cutoff::Zero => return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 }),
        Cutoff::One => return Err(Error::InvalidSpec("weyl_integral needs a compactly supported cutoff".into())),
        Cutoff::Bump { center, radius, .. } => (center.clone(), *radius),
    };
    let d = spec.d;
    let axes: Vec<usize> = (0..d).filter(|&k| spec.depends_on(k)).collect();
    let k_free = d - axes.len();
    let variable_field = !(spec.field_is_constant() && spec.metric_is_constant());
    let fixed_eig = if variable_field { None } else { Some(compute_eigenstructure(spec, cfg.eps0, cfg.eps_group)?) };

    let density = |x: &[f64]| -> Result<f64> {
        let e;
        let eig = match &fixed_eig {
            Some(e0) => e0,
            None => {
                e = eigenstructure_at(spec, x, cfg.eps0, cfg.eps_group)?;
                &e
            }
        };
        Ok(weyl_density(spec, eig, x, tau)?.value)
    };

    if axes.is_empty() {
        let v = density(&center)? * spec.cutoff.integral(d);
        return Ok(QuadResult { value: v, error: 0.0, evaluations: 1 });
    }

    // Errors inside the integrand are surfaced after the fact.
    let failure = std::sync::Mutex::new(None::<Error>);
    let integrand = |y: &[f64]| -> f64 {
        let mut x = center.clone();
        let mut t2 = 0.0;
        for (i, &a) in axes.iter().enumerate() {
            x[a] = y[i];
            t2 += (y[i] - center[a]).powi(2);
        }
        let w = spec.cutoff.marginal(k_free, t2);
        if w == 0.0 {
            return 0.0;
        }
        match density(&x) {
            Ok(v) => v * w,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                0.0
            }
        }
    };

    let res = if axes.len() == 1 {
        let a = axes[0];
        let qc = QuadConfig { rel_tol: cfg.rel_tol, ..QuadConfig::default() };
        quad::integrate(|s| integrand(&[s]), center[a] - radius, center[a] + radius, &[center[a]], &qc)?
    } else {
        let lo: Vec<f64> = axes.iter().map(|&a| center[a] - radius).collect();
        let hi: Vec<f64> = axes.iter().map(|&a| center[a] + radius).collect();
        quad::midpoint_richardson(&integrand, &lo, &hi, cfg.rel_tol, cfg.max_points)?
    };
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(res)
}

/// Mollifier schedules, keyed by the zone they belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Weak field, q ≥ 2: Cρ⁻¹h|log h| above ρ̄₁ = max(μ⁻¹, (μh|log h|)^{1/2}), Cμh|log h| below.
    Weak,
    /// Moderate field: Cρ⁻¹h|log h| + μ⁻¹ρ̄₁ˢρ⁻ˢ above ρ̄₁ = (μh|log h|)^{1/2}, Cμ⁻¹ below.
    Moderate,
    /// Intermediate zone: Cμ⁻¹(ρ̄₁/ρ)ˢ + Cρ⁻¹h|log h| above ρ̄₁, Cμ⁻¹ below.
    Intermediate,
    /// Strong field: C(μ⁻¹h|log h|)^{1/2} + Ch|log h|.
    Strong,
    /// Ultrastrong field: Ch|log h|.
    Ultrastrong,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub c: f64,
    pub s: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams { c: 1.0, s: 5.0 }
    }
}

pub fn epsilon_schedule(mu: f64, h: f64, rho: f64, kind: ScheduleKind, p: ScheduleParams) -> f64 {
    let lg = h.ln().abs();
    let rho1 = (mu * h * lg).sqrt();
    match kind {
        ScheduleKind::Weak => {
            let rb = rho1.max(1.0 / mu);
            if rho >= rb {
                p.c * h * lg / rho
            } else {
                p.c * mu * h * lg
            }
        }
        ScheduleKind::Moderate => {
            if rho >= rho1 {
                p.c * h * lg / rho + (rho1 / rho).powf(p.s) / mu
            } else {
                p.c / mu
            }
        }
        ScheduleKind::Intermediate => {
            if rho >= rho1 {
                p.c / mu * (rho1 / rho).powf(p.s) + p.c * h * lg / rho
            } else {
                p.c / mu
            }
        }
        ScheduleKind::Strong => p.c * (h * lg / mu).sqrt() + p.c * h * lg,
        ScheduleKind::Ultrastrong => p.c * h * lg,
    }
}

fn kernel_weights(eps: f64, spacing: f64, m: i32) -> Vec<f64> {
    let half = (eps / spacing).floor() as i64;
    (-half..=half)
        .map(|j| {
            let t = j as f64 * spacing / eps;
            (1.0 - t * t).max(0.0).powi(m)
        })
        .collect()
}

/// Convolution with the normalised bump (1 − t²)₊^m of half-width `eps`, applied
/// axis by axis; the kernel is renormalised near the grid edge.
pub fn mollify(samples: &GriddedField, eps: f64, m: u32) -> Result<GriddedField> {
    let grid: &UniformGrid = &samples.grid;
    let spacing = (0..grid.dim()).filter(|&k| grid.n[k] > 1).map(|k| grid.spacing(k)).fold(f64::INFINITY, f64::min);
    if spacing.is_finite() && eps < 2.0 * spacing {
        return Err(Error::EpsTooSmall { eps, spacing });
    }
    let mut vals = samples.values.clone();
    for axis in 0..grid.dim() {
        let n = grid.n[axis];
        if n == 1 {
            continue;
        }
        let w = kernel_weights(eps, grid.spacing(axis), m as i32);
        let half = (w.len() / 2) as i64;
        let stride: usize = grid.n[axis + 1..].iter().product();
        let mut out = vec![0.0; vals.len()];
        for flat in 0..vals.len() {
            let i = ((flat / stride) % n) as i64;
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                let j = i + k as i64 - half;
                if j < 0 || j >= n as i64 {
                    continue;
                }
                let src = (flat as i64 + (j - i) * stride as i64) as usize;
                acc += wk * vals[src];
                norm += wk;
            }
            out[flat] = acc / norm;
        }
        vals = out;
    }
    GriddedField::new(grid.clone(), vals)
}
