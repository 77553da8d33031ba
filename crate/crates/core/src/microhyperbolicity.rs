//! The rescaled symbol a(x, ξ) and grid checks of the checkable
//! microhyperbolicity conditions.
//!
//! Margins are certified lower bounds: the raw grid minimum minus ten times a
//! Richardson estimate of the finite-difference error in the gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, UniformGrid};
use crate::field_geometry::OperatorSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhStatus {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    /// Landau multi-index attaining the minimum, when levels enter.
    pub alpha: Option<Vec<usize>>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MhReport {
    pub status: MhStatus,
    pub ell: Option<Vec<f64>>,
    /// Certified worst-case value over the grid.
    pub margin: f64,
    /// Width of the finite-difference uncertainty band at the worst point.
    pub band: f64,
    pub witnesses: Vec<Witness>,
    /// Certified value per grid point, grid order.
    pub per_point: Vec<f64>,
    pub note: Option<String>,
}

/// a(x, ξ) = μ² Σ g^{jk}(ξ_j − V_j)(ξ_k − V_k) + V
pub fn symbol_value(spec: &OperatorSpec, x: &[f64], xi: &[f64]) -> f64 {
    let g = spec.metric_at(x);
    let vp = spec.vector_potential_at(x);
    let p: Vec<f64> = xi.iter().zip(&vp).map(|(a, b)| a - b).collect();
    let mut a0 = 0.0;
    for j in 0..spec.d {
        for k in 0..spec.d {
            a0 += g[(j, k)] * p[j] * p[k];
        }
    }
    spec.mu * spec.mu * a0 + spec.potential_at(x)
}

fn fd_step(grid: &UniformGrid, k: usize) -> f64 {
    let s = grid.spacing(k);
    if s > 0.0 {
        s
    } else {
        1e-3
    }
}

/// Centred difference gradient at step δ and δ/2; returns the finer one and
/// the Richardson error estimate |D(δ) − D(δ/2)|/3 (Euclidean).
fn gradient_with_error(g: &dyn Fn(&[f64]) -> f64, x: &[f64], grid: &UniformGrid) -> (Vec<f64>, f64) {
    let d = x.len();
    let mut fine = vec![0.0; d];
    let mut err2 = 0.0;
    let mut y = x.to_vec();
    for k in 0..d {
        let cd = |y: &mut Vec<f64>, s: f64| {
            y[k] = x[k] + s;
            let p = g(y);
            y[k] = x[k] - s;
            let m = g(y);
            y[k] = x[k];
            (p - m) / (2.0 * s)
        };
        let s = fd_step(grid, k);
        let c = cd(&mut y, s);
        let f = cd(&mut y, 0.5 * s);
        fine[k] = f;
        err2 += ((c - f) / 3.0).powi(2);
    }
    (fine, err2.sqrt())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

struct PointEval {
    raw: f64,
    band: f64,
    ell: Option<Vec<f64>>,
    alpha: Option<Vec<usize>>,
    undecidable: Option<String>,
}

fn assemble(grid: &UniformGrid, evals: Vec<PointEval>, eps: f64) -> MhReport {
    let per_point: Vec<f64> = evals.iter().map(|e| e.raw - e.band).collect();
    let worst = (0..evals.len()).min_by(|&a, &b| per_point[a].total_cmp(&per_point[b])).expect("nonempty grid");
    let w = &evals[worst];
    let margin = per_point[worst];
    let upper = evals.iter().map(|e| e.raw + e.band).fold(f64::INFINITY, f64::min);
    let undecided = evals.iter().position(|e| e.undecidable.is_some());
    let status = if undecided.is_some() {
        MhStatus::Inconclusive
    } else if margin >= eps {
        MhStatus::Holds
    } else if upper < eps {
        MhStatus::Fails
    } else {
        MhStatus::Inconclusive
    };
    let witnesses = match status {
        MhStatus::Fails => evals
            .iter()
            .enumerate()
            .filter(|(_, e)| e.raw + e.band < eps)
            .map(|(i, e)| Witness { point: grid.point(i), alpha: e.alpha.clone(), value: e.raw })
            .collect(),
        MhStatus::Inconclusive if undecided.is_some() => {
            let i = undecided.expect("checked");
            vec![Witness { point: grid.point(i), alpha: None, value: evals[i].raw }]
        }
        _ => vec![Witness { point: grid.point(worst), alpha: w.alpha.clone(), value: w.raw }],
    };
    MhReport {
        status,
        ell: if status == MhStatus::Holds { w.ell.clone() } else { None },
        margin,
        band: w.band,
        witnesses,
        per_point,
        note: undecided.and_then(|i| evals[i].undecidable.clone()),
    }
}

/// Landau data for the μh ≥ ε₀ variant: levels Σ(2α_i+1) f_i μh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandauData {
    pub f: Vec<f64>,
    pub mu_h: f64,
}

/// min over α of |Σ(2α_i+1) f_i μh + v| and the minimising α.
fn nearest_level(l: &LandauData, v: f64) -> (f64, Vec<usize>) {
    let r = l.f.len();
    let fmin = l.f.iter().cloned().fold(f64::INFINITY, f64::min);
    let ground: f64 = l.mu_h * l.f.iter().sum::<f64>();
    let cap = (-v).max(ground) + 2.0 * l.mu_h * fmin;
    let mut best = (f64::INFINITY, vec![0; r]);
    fn rec(l: &LandauData, j: usize, partial: f64, cap: f64, v: f64, alpha: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if j == l.f.len() {
            let dist = (l.mu_h * partial + v).abs();
            if dist < best.0 {
                *best = (dist, alpha.clone());
            }
            return;
        }
        let floor: f64 = l.f[j + 1..].iter().sum();
        let mut a = 0;
        loop {
            let s = partial + (2 * a + 1) as f64 * l.f[j];
            if a > 0 && l.mu_h * (s + floor) > cap {
                return;
            }
            alpha.push(a);
            rec(l, j + 1, s, cap, v, alpha, best);
            alpha.pop();
            a += 1;
        }
    }
    rec(l, 0, 0.0, cap, v, &mut Vec::new(), &mut best);
    best
}

/// |∇V| ≥ ε, or with Landau data |Σ(2α_i+1) f_i μh + V| + |∇V| ≥ ε for all α.
pub fn check_constant_field(v: &ScalarField, grid: &UniformGrid, eps: f64, landau: Option<&LandauData>) -> MhReport {
    let evals: Vec<PointEval> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let (grad, err) = gradient_with_error(&|y| v.eval(y), &x, grid);
            let gn = norm(&grad);
            let (level, alpha) = match landau {
                Some(l) => {
                    let (dist, a) = nearest_level(l, v.eval(&x));
                    (dist, Some(a))
                }
                None => (0.0, None),
            };
            PointEval { raw: gn + level, band: 10.0 * err, ell: unit(&grad), alpha, undecidable: None }
        })
        .collect();
    assemble(grid, evals, eps)
}

/// |W| + |∇W| ≥ ε with W = V + μh Σ f_j.
pub fn check_ultrastrong(w: &ScalarField, grid: &UniformGrid, eps: f64) -> MhReport {
    let evals: Vec<PointEval> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let (grad, err) = gradient_with_error(&|y| w.eval(y), &x, grid);
            let ell = unit(&grad);
            PointEval { raw: w.eval(&x).abs() + norm(&grad), band: 10.0 * err, ell, alpha: None, undecidable: None }
        })
        .collect();
    assemble(grid, evals, eps)
}

/// Constant-multiplicity case: |∇(V/f₁)| ≥ ε when all f_j/f₁ are constant,
/// otherwise the largest t with ⟨ℓ, ∇(f_j/V)⟩ ≥ t for all j, |ℓ|_∞ ≤ 1.
pub fn check_constant_multiplicity(f: &[ScalarField], v: &ScalarField, grid: &UniformGrid, eps: f64) -> MhReport {
    let ratios_constant = f.iter().skip(1).all(|fj| {
        let r0 = fj.eval(&grid.point(0)) / f[0].eval(&grid.point(0));
        (0..grid.len()).all(|i| {
            let x = grid.point(i);
            (fj.eval(&x) / f[0].eval(&x) - r0).abs() <= 1e-12 * r0.abs()
        })
    });
    let evals: Vec<PointEval> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            if ratios_constant {
                let (grad, err) = gradient_with_error(&|y| v.eval(y) / f[0].eval(y), &x, grid);
                return PointEval { raw: norm(&grad), band: 10.0 * err, ell: unit(&grad), alpha: None, undecidable: None };
            }
            if v.eval(&x) == 0.0 {
                return PointEval {
                    raw: 0.0,
                    band: 0.0,
                    ell: None,
                    alpha: None,
                    undecidable: Some(format!("V vanishes at {x:?}")),
                };
            }
            let mut grads = Vec::with_capacity(f.len());
            let mut err = 0.0f64;
            for fj in f {
                let (g, e) = gradient_with_error(&|y| fj.eval(y) / v.eval(y), &x, grid);
                grads.push(g);
                err = err.max(e);
            }
            match max_margin_direction(&grads) {
                Ok((t, ell)) => {
                    // |⟨ℓ, δg⟩| ≤ |ℓ|₂ |δg| ≤ √d |δg| for |ℓ|_∞ ≤ 1
                    let band = 10.0 * err * (x.len() as f64).sqrt();
                    PointEval { raw: t, band, ell: Some(ell), alpha: None, undecidable: None }
                }
                Err(e) => PointEval { raw: 0.0, band: 0.0, ell: None, alpha: None, undecidable: Some(e.to_string()) },
            }
        })
        .collect();
    assemble(grid, evals, eps)
}

/// max t subject to ⟨ℓ, g_j⟩ ≥ t, −1 ≤ ℓ_i ≤ 1, via dense simplex with Bland's rule
/// on u = ℓ + 1, s = t + K.
pub fn max_margin_direction(g: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let m = g.len();
    let d = g.first().map_or(0, |v| v.len());
    let kbig = g.iter().map(|v| v.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let nv = d + 1;
    let nc = m + d + 1;
    // rows: constraints then objective; columns: nv structural, nc slack, rhs
    let cols = nv + nc + 1;
    let mut tab = vec![vec![0.0; cols]; nc + 1];
    for (j, gj) in g.iter().enumerate() {
        for i in 0..d {
            tab[j][i] = -gj[i];
        }
        tab[j][d] = 1.0;
        tab[j][cols - 1] = kbig - gj.iter().sum::<f64>();
    }
    for i in 0..d {
        tab[m + i][i] = 1.0;
        tab[m + i][cols - 1] = 2.0;
    }
    tab[m + d][d] = 1.0;
    tab[m + d][cols - 1] = 2.0 * kbig;
    for (r, row) in tab.iter_mut().enumerate().take(nc) {
        row[nv + r] = 1.0;
    }
    tab[nc][d] = -1.0;
    let mut basis: Vec<usize> = (nv..nv + nc).collect();
    for _ in 0..10_000 {
        let Some(enter) = (0..nv + nc).find(|&c| tab[nc][c] < -1e-14) else {
            let mut x = vec![0.0; nv + nc];
            for (r, &b) in basis.iter().enumerate() {
                x[b] = tab[r][cols - 1];
            }
            let ell = x[..d].iter().map(|u| u - 1.0).collect();
            return Ok((x[d] - kbig, ell));
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..nc {
            if tab[r][enter] > 1e-14 {
                let ratio = tab[r][cols - 1] / tab[r][enter];
                let better = match leave {
                    None => true,
                    Some((lr, lv)) => ratio < lv - 1e-15 || (ratio <= lv + 1e-15 && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (pr, _) = leave.ok_or_else(|| Error::LpDegenerate("unbounded direction".into()))?;
        let piv = tab[pr][enter];
        for v in tab[pr].iter_mut() {
            *v /= piv;
        }
        let prow = tab[pr].clone();
        for (r, row) in tab.iter_mut().enumerate() {
            if r != pr && row[enter] != 0.0 {
                let c = row[enter];
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= c * p;
                }
            }
        }
        basis[pr] = enter;
    }
    Err(Error::LpDegenerate("simplex iteration cap reached".into()))
}
