//! Lattice-point counts under the Landau simplex, their integrals over a box,
//! the empirical ν̂(ℏ) estimator, and the gradient-rank criterion.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, UniformGrid};
use crate::oscillator_algebra::{build_perturbed, truncated_spectrum, CubicTerm, PerturbedOscillator};
use crate::quad::{self, QuadConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingQuery {
    pub f: Vec<f64>,
    pub v: f64,
    pub hbar: f64,
    pub tau: f64,
}

fn check_intensities(f: &[f64]) -> Result<()> {
    match f.iter().position(|&x| !(x > 0.0)) {
        Some(i) => Err(Error::Unbounded { index: i, value: f[i] }),
        None => Ok(()),
    }
}

/// #{α ∈ ℤ₊^r : ℏ Σ(2α_j+1) f_j + V < τ}
pub fn n0_count(q: &CountingQuery) -> Result<u64> {
    check_intensities(&q.f)?;
    if !(q.hbar > 0.0) || !q.tau.is_finite() || !q.v.is_finite() {
        return Err(Error::InvalidSpec(format!("bad counting query {q:?}")));
    }
    fn rec(f: &[f64], partial: f64, q: &CountingQuery) -> u64 {
        let Some((&fj, rest)) = f.split_first() else {
            return u64::from(q.hbar * partial + q.v < q.tau);
        };
        // the remaining modes contribute at least Σ f_k
        let floor: f64 = rest.iter().sum();
        let mut n = 0;
        let mut a = 0u64;
        loop {
            let s = partial + (2 * a + 1) as f64 * fj;
            if q.hbar * (s + floor) + q.v >= q.tau {
                return n;
            }
            n += rec(rest, s, q);
            a += 1;
        }
    }
    Ok(rec(&q.f, 0.0, q))
}

/// ℏ^r n₀ → (τ−V)₊^r / (2^r r! Πf)
pub fn weyl_volume(f: &[f64], v: f64, tau: f64) -> f64 {
    let r = f.len() as i32;
    let fact: f64 = (1..=f.len()).map(|k| k as f64).product();
    (tau - v).max(0.0).powi(r) / (2f64.powi(r) * fact * f.iter().product::<f64>())
}

/// Intensities and potential as functions of x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingField {
    pub f: Vec<ScalarField>,
    pub v: ScalarField,
}

/// Box region; axis 0 is split into `cells[0]` cells on which the data are
/// interpolated linearly, the other axes use `cells[k]` midpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl CountingRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let cells = vec![64; lo.len()];
        CountingRegion { lo, hi, cells }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

struct Item {
    lo: f64,
    a: f64,
    b: f64,
    w: f64,
}

/// ∫_region n₀(x, ℏ, τ) dx for every τ up to `tau_max`.
///
/// On a cell the level of each α is linear in x₀, so the measure of
/// {level < τ} is exact; data affine in x₀ are therefore integrated exactly.
pub struct IntegratedCounter {
    items: Vec<Item>,
    pub hbar: f64,
    pub tau_max: f64,
}

impl IntegratedCounter {
    pub fn new(field: &CountingField, region: &CountingRegion, hbar: f64, tau_max: f64) -> Result<Self> {
        let d = region.lo.len();
        if d == 0 || region.hi.len() != d || region.cells.len() != d || region.cells.contains(&0) {
            return Err(Error::InvalidSpec("counting region needs matching lo/hi/cells with positive cell counts".into()));
        }
        if !(hbar > 0.0) {
            return Err(Error::InvalidSpec(format!("hbar must be positive, got {hbar}")));
        }
        let cells = effective_cells(field, region);
        let width: Vec<f64> = (0..d).map(|k| (region.hi[k] - region.lo[k]) / cells[k] as f64).collect();
        let transverse: usize = cells[1..].iter().product();
        let r = field.f.len();
        let mut items = Vec::new();
        for flat in 0..transverse * cells[0] {
            let c0 = flat % cells[0];
            let mut rest = flat / cells[0];
            let mut xa = vec![0.0; d];
            for k in (1..d).rev() {
                xa[k] = region.lo[k] + (rest % cells[k]) as f64 * width[k] + 0.5 * width[k];
                rest /= cells[k];
            }
            let mut xb = xa.clone();
            xa[0] = region.lo[0] + c0 as f64 * width[0];
            xb[0] = xa[0] + width[0];
            let fa: Vec<f64> = field.f.iter().map(|g| g.eval(&xa)).collect();
            let fb: Vec<f64> = field.f.iter().map(|g| g.eval(&xb)).collect();
            check_intensities(&fa)?;
            check_intensities(&fb)?;
            let (va, vb) = (field.v.eval(&xa), field.v.eval(&xb));
            let w = width.iter().product::<f64>();
            let fmin: Vec<f64> = (0..r).map(|j| fa[j].min(fb[j])).collect();
            let vmin = va.min(vb);
            enumerate(&fmin, hbar, tau_max - vmin, &mut |alpha: &[u64]| {
                let (mut sa, mut sb) = (0.0, 0.0);
                for j in 0..r {
                    let m = (2 * alpha[j] + 1) as f64;
                    sa += m * fa[j];
                    sb += m * fb[j];
                }
                let (a, b) = (hbar * sa + va, hbar * sb + vb);
                items.push(Item { lo: a.min(b), a, b, w });
            });
        }
        items.sort_by(|x, y| x.lo.total_cmp(&y.lo));
        Ok(IntegratedCounter { items, hbar, tau_max })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn integral(&self, tau: f64) -> Result<f64> {
        if tau > self.tau_max {
            return Err(Error::InvalidSpec(format!("tau {tau} above the enumeration bound {}", self.tau_max)));
        }
        let mut s = 0.0;
        for it in &self.items {
            if it.lo >= tau {
                break;
            }
            s += it.w * below_fraction(it.a, it.b, tau);
        }
        Ok(s)
    }
}

/// Measure fraction of t ∈ [0,1] with a + t(b − a) < τ.
fn below_fraction(a: f64, b: f64, tau: f64) -> f64 {
    if a < tau && b < tau {
        1.0
    } else if a >= tau && b >= tau {
        0.0
    } else {
        let t = (tau - a) / (b - a);
        if b > a {
            t
        } else {
            1.0 - t
        }
    }
}

/// Calls `visit` for every α with ℏ Σ(2α_j+1) f_j < e.
fn enumerate(f: &[f64], hbar: f64, e: f64, visit: &mut dyn FnMut(&[u64])) {
    fn rec(f: &[f64], j: usize, hbar: f64, e: f64, partial: f64, alpha: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64])) {
        if j == f.len() {
            visit(alpha);
            return;
        }
        let floor: f64 = f[j + 1..].iter().sum();
        let mut a = 0u64;
        loop {
            let s = partial + (2 * a + 1) as f64 * f[j];
            if hbar * (s + floor) >= e {
                return;
            }
            alpha.push(a);
            rec(f, j + 1, hbar, e, s, alpha, visit);
            alpha.pop();
            a += 1;
        }
    }
    rec(f, 0, hbar, e, 0.0, &mut Vec::new(), visit);
}

/// Drop transverse sampling on axes nothing depends on, and collapse axis 0 to
/// one cell when every datum is affine in x₀ alone.
fn effective_cells(field: &CountingField, region: &CountingRegion) -> Vec<usize> {
    let d = region.lo.len();
    let all: Vec<&ScalarField> = field.f.iter().chain(std::iter::once(&field.v)).collect();
    let mut cells = region.cells.clone();
    for (k, c) in cells.iter_mut().enumerate().skip(1) {
        if !all.iter().any(|g| g.depends_on(k)) {
            *c = 1;
        }
    }
    let only_axis0 = (1..d).all(|k| cells[k] == 1);
    if only_axis0 && all.iter().all(|g| g.affine(d).is_some()) {
        cells[0] = 1;
    }
    cells
}

/// ∫_region (n₀(x, ℏ, τ′) − n₀(x, ℏ, τ)) dx
pub fn n0_integrated_difference(
    field: &CountingField,
    region: &CountingRegion,
    hbar: f64,
    tau: f64,
    tau_prime: f64,
) -> Result<f64> {
    let c = IntegratedCounter::new(field, region, hbar, tau.max(tau_prime))?;
    Ok(c.integral(tau_prime)? - c.integral(tau)?)
}

/// ∫_region (τ − V)₊^r / (2^r r! Πf) dx on the same transverse sampling, with
/// Gauss–Kronrod along axis 0.
pub fn integrated_weyl_volume(field: &CountingField, region: &CountingRegion, tau: f64) -> Result<f64> {
    let d = region.lo.len();
    let cells = effective_cells(field, region);
    let width: Vec<f64> = (0..d).map(|k| (region.hi[k] - region.lo[k]) / cells[k] as f64).collect();
    let transverse: usize = cells[1..].iter().product();
    let breaks: Vec<f64> = (1..cells[0]).map(|c| region.lo[0] + c as f64 * width[0]).collect();
    let cfg = QuadConfig { rel_tol: 1e-13, ..QuadConfig::default() };
    let mut total = 0.0;
    for flat in 0..transverse {
        let mut rest = flat;
        let mut x = vec![0.0; d];
        for k in (1..d).rev() {
            x[k] = region.lo[k] + (rest % cells[k]) as f64 * width[k] + 0.5 * width[k];
            rest /= cells[k];
        }
        let line = |s: f64| {
            let mut y = x.clone();
            y[0] = s;
            let f: Vec<f64> = field.f.iter().map(|g| g.eval(&y)).collect();
            weyl_volume(&f, field.v.eval(&y), tau)
        };
        let r = quad::integrate(line, region.lo[0], region.hi[0], &breaks, &cfg)?;
        total += r.value * width[1..].iter().product::<f64>();
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuRow {
    pub hbar: f64,
    pub nu_hat: f64,
    pub tau: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuEstimate {
    pub rows: Vec<NuRow>,
    pub kappa_hat: f64,
}

pub const NU_TAU_POINTS: usize = 200;

/// ν̂(ℏ) = max over τ ∈ window (200 points) and λ ∈ {ℏ², ℏ^{3/2}, ℏ} of
/// |ℏ^r ∫(n₀(τ+λ) − n₀(τ)) − ∫(W(τ+λ) − W(τ))| with W the Weyl volume;
/// κ̂ is the least-squares slope of log ν̂ against log ℏ.
pub fn estimate_nu(
    field: &CountingField,
    region: &CountingRegion,
    hbar_list: &[f64],
    tau_window: (f64, f64),
) -> Result<NuEstimate> {
    if hbar_list.len() < 4 {
        return Err(Error::InsufficientData { need: 4, got: hbar_list.len() });
    }
    let ratio = hbar_list[1] / hbar_list[0];
    if hbar_list.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9) || ratio == 1.0 {
        return Err(Error::InvalidSpec("hbar values must form a nontrivial geometric progression".into()));
    }
    let (ta, tb) = tau_window;
    if !(tb > ta) {
        return Err(Error::InvalidSpec(format!("empty tau window [{ta}, {tb}]")));
    }
    let r = field.f.len() as i32;
    let taus: Vec<f64> = (0..NU_TAU_POINTS).map(|i| ta + (tb - ta) * i as f64 / (NU_TAU_POINTS - 1) as f64).collect();
    let mut rows = Vec::with_capacity(hbar_list.len());
    for &hb in hbar_list {
        let lambdas = [hb * hb, hb.powf(1.5), hb];
        let counter = IntegratedCounter::new(field, region, hb, tb + hb)?;
        let best = taus
            .par_iter()
            .map(|&t| -> Result<(f64, f64, f64)> {
                let m0 = counter.integral(t)?;
                let w0 = integrated_weyl_volume(field, region, t)?;
                let mut best = (f64::NEG_INFINITY, t, 0.0);
                for &l in &lambdas {
                    let dm = counter.integral(t + l)? - m0;
                    let dw = integrated_weyl_volume(field, region, t + l)? - w0;
                    let dev = (hb.powi(r) * dm - dw).abs();
                    if dev > best.0 {
                        best = (dev, t, l);
                    }
                }
                Ok(best)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold((f64::NEG_INFINITY, 0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        rows.push(NuRow { hbar: hb, nu_hat: best.0, tau: best.1, lambda: best.2 });
    }
    if let Some(row) = rows.iter().find(|row| !(row.nu_hat > 0.0)) {
        return Err(Error::Degenerate(format!("nu estimate vanished at hbar = {}", row.hbar)));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.hbar.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.nu_hat.ln()).collect();
    let kappa_hat = least_squares_slope(&xs, &ys);
    Ok(NuEstimate { rows, kappa_hat })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// min over grid points of rank{∇(f₂/f₁), …, ∇(f_r/f₁)}.
pub fn diophantine_rank(f: &[ScalarField], grid: &UniformGrid) -> usize {
    let r = f.len();
    if r < 2 {
        return 0;
    }
    let d = grid.dim();
    let mut best = usize::MAX;
    for flat in 0..grid.len() {
        let x = grid.point(flat);
        let f1 = f[0].eval(&x);
        let g1 = f[0].gradient(&x);
        let mut m = DMatrix::zeros(r - 1, d);
        let mut scale = 0.0f64;
        for j in 1..r {
            let fj = f[j].eval(&x);
            let gj = f[j].gradient(&x);
            scale = scale.max((fj / f1).abs());
            for k in 0..d {
                m[(j - 1, k)] = (gj[k] * f1 - fj * g1[k]) / (f1 * f1);
            }
        }
        let sv = m.singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-8 * scale.max(smax);
        best = best.min(sv.iter().filter(|&&s| s > tol).count());
    }
    best
}

/// Eigenvalues of the truncated 𝐚 below τ, trusted by the top-layer mass test.
pub fn perturbed_count(op: &PerturbedOscillator, tau: f64) -> Result<usize> {
    truncated_spectrum(op).count_below(tau)
}

/// As `perturbed_count`, additionally requiring that doubling n_max leaves the count unchanged.
pub fn perturbed_count_doubling(
    f: &[f64],
    hbar: f64,
    b: &[CubicTerm],
    mu: f64,
    n_max: usize,
    stabilizer: Option<f64>,
    tau: f64,
) -> Result<usize> {
    let n1 = perturbed_count(&build_perturbed(f, hbar, b, mu, n_max, stabilizer)?, tau)?;
    let n2 = perturbed_count(&build_perturbed(f, hbar, b, mu, 2 * n_max, stabilizer)?, tau)?;
    if n1 != n2 {
        return Err(Error::TruncationUnreliable { tau, certified: f64::NEG_INFINITY });
    }
    Ok(n1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Poly;
    use proptest::prelude::*;

    fn q(f: &[f64], v: f64, hbar: f64, tau: f64) -> CountingQuery {
        CountingQuery { f: f.to_vec(), v, hbar, tau }
    }

    #[test]
    fn simplex_examples() {
        assert_eq!(n0_count(&q(&[1.0, 1.0], 0.0, 0.1, 1.0)).unwrap(), 10);
        assert_eq!(n0_count(&q(&[1.0, 2.0], -2.0, 0.25, 0.0)).unwrap(), 4);
        assert_eq!(n0_count(&q(&[1.0, 2.0], 0.0, 0.25, 0.75)).unwrap(), 0);
        assert!(matches!(n0_count(&q(&[1.0, 0.0], 0.0, 0.1, 1.0)), Err(Error::Unbounded { index: 1, .. })));
    }

    #[test]
    fn weyl_volume_limit_at_first_order() {
        let (f, v, tau) = ([1.0, 1.7, 0.6], -0.3, 1.1);
        let w = weyl_volume(&f, v, tau);
        for k in 3..8 {
            let hb = 2f64.powi(-k);
            let n = n0_count(&q(&f, v, hb, tau)).unwrap() as f64;
            assert!(((hb.powi(3) * n - w) / w).abs() < 15.0 * hb, "hbar {hb}");
        }
    }

    fn affine_field() -> CountingField {
        CountingField {
            f: vec![ScalarField::Constant(1.0), ScalarField::Constant(1.0)],
            v: ScalarField::Polynomial(Poly::linear(0, 1.0)),
        }
    }

    #[test]
    fn integrated_difference_against_level_formula() {
        let region = CountingRegion::new(vec![0.0], vec![1.0]);
        let got = n0_integrated_difference(&affine_field(), &region, 0.1, 1.0, 1.05).unwrap();
        // levels 0.2(n+1) + x with multiplicity n + 1
        let meas = |t: f64, n: usize| (t - 0.2 * (n + 1) as f64).clamp(0.0, 1.0);
        let want: f64 = (0..10).map(|n| (n + 1) as f64 * (meas(1.05, n) - meas(1.0, n))).sum();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((want - 0.75).abs() < 1e-12);
        // brute-force scan over x
        let m = 20000;
        let scan: f64 = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / m as f64;
                (n0_count(&q(&[1.0, 1.0], x, 0.1, 1.05)).unwrap() - n0_count(&q(&[1.0, 1.0], x, 0.1, 1.0)).unwrap())
                    as f64
            })
            .sum::<f64>()
            / m as f64;
        assert!((scan - got).abs() < 1e-3);
    }

    #[test]
    fn nonaffine_cells_converge() {
        let field = CountingField {
            f: vec![ScalarField::Constant(1.0), ScalarField::Polynomial(Poly::constant(1.0).term(0.5, &[2]))],
            v: ScalarField::Constant(0.0),
        };
        let coarse = CountingRegion { lo: vec![0.0], hi: vec![1.0], cells: vec![64] };
        let fine = CountingRegion { lo: vec![0.0], hi: vec![1.0], cells: vec![4096] };
        let a = n0_integrated_difference(&field, &coarse, 0.05, 0.5, 1.0).unwrap();
        let b = n0_integrated_difference(&field, &fine, 0.05, 0.5, 1.0).unwrap();
        assert!((a - b).abs() < 1e-3 * b.abs());
    }

    #[test]
    fn nu_needs_four_values() {
        let region = CountingRegion::new(vec![0.0], vec![1.0]);
        let e = estimate_nu(&affine_field(), &region, &[0.1, 0.05, 0.025], (0.5, 1.0));
        assert!(matches!(e, Err(Error::InsufficientData { need: 4, got: 3 })));
    }

    #[test]
    fn comeasurable_nu_is_linear() {
        let field = CountingField { f: vec![ScalarField::Constant(1.0); 2], v: ScalarField::Constant(0.0) };
        let region = CountingRegion::new(vec![0.0], vec![1.0]);
        let hs: Vec<f64> = (4..8).map(|k| 2f64.powi(-k)).collect();
        let est = estimate_nu(&field, &region, &hs, (1.0, 2.0)).unwrap();
        for row in &est.rows {
            let ratio = row.nu_hat / row.hbar;
            assert!((0.2..=5.0).contains(&ratio), "{row:?}");
        }
        assert!((est.kappa_hat - 1.0).abs() < 0.2, "{est:?}");
    }

    #[test]
    fn gradient_rank_examples() {
        let grid = UniformGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![5, 5]).unwrap();
        let c = ScalarField::Constant(1.0);
        let x1 = ScalarField::Polynomial(Poly::constant(1.0).term(1.0, &[1, 0]));
        let x2 = ScalarField::Polynomial(Poly::constant(1.0).term(1.0, &[0, 1]));
        assert_eq!(diophantine_rank(&[c.clone(), c.clone()], &grid), 0);
        assert_eq!(diophantine_rank(&[c.clone(), x1.clone()], &grid), 1);
        assert_eq!(diophantine_rank(&[c, x1, x2], &grid), 2);
    }

    #[test]
    fn unperturbed_count_matches_simplex() {
        let op = build_perturbed(&[2.0, 1.0], 0.1, &[], 5.0, 12, None).unwrap();
        for tau in [0.05, 0.31, 1.0, 1.7] {
            let want = n0_count(&q(&[2.0, 1.0], 0.0, 0.1, tau)).unwrap() as usize;
            assert_eq!(perturbed_count(&op, tau).unwrap(), want);
        }
        let n = perturbed_count_doubling(&[2.0, 1.0], 0.1, &[], 5.0, 8, None, 1.0).unwrap();
        assert_eq!(n as u64, n0_count(&q(&[2.0, 1.0], 0.0, 0.1, 1.0)).unwrap());
        assert!(matches!(perturbed_count(&op, 100.0), Err(Error::TruncationUnreliable { .. })));
    }

    #[test]
    fn resonant_splitting_against_dense_diagonalisation() {
        use crate::oscillator_algebra::{build_resonant_model, ResonantVariant};
        let (mu, h, omega) = (8.0, 0.0125, 0.05);
        let m = build_resonant_model(ResonantVariant::R2, omega, mu, h, 10).unwrap();
        let (vals, _) = crate::linalg::hermitian_eigen(m.full_operator().to_dense(), false);
        // first-order splitting ±√2(2μh)^{3/2}ω/μ of the level at 0
        let e = 2f64.sqrt() * (2.0 * mu * h).powf(1.5) * omega / mu;
        let below = vals.iter().filter(|&&x| x < 0.0).count();
        let at_level_below = vals.iter().filter(|&&x| x < 0.0 && x > -0.5 * mu * h).count();
        assert_eq!(at_level_below, 1);
        assert_eq!(below, 3);
        let split = vals.iter().find(|&&x| x < 0.0 && x > -0.5 * mu * h).unwrap();
        assert!((split + e).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn monotone(tau in -1.0f64..3.0, dt in 0.0f64..1.0, f1 in 0.3f64..2.0, df in 0.0f64..1.0, hb in 0.05f64..0.5) {
            let base = n0_count(&q(&[f1, 1.0], 0.0, hb, tau)).unwrap();
            prop_assert!(n0_count(&q(&[f1, 1.0], 0.0, hb, tau + dt)).unwrap() >= base);
            prop_assert!(n0_count(&q(&[f1 + df, 1.0], 0.0, hb, tau)).unwrap() <= base);
            prop_assert!(n0_count(&q(&[f1, 1.0], 0.0, hb * 1.3, tau)).unwrap() <= base);
        }

        #[test]
        fn telescoping(t1 in 0.0f64..1.5, d1 in 0.0f64..0.5, d2 in 0.0f64..0.5) {
            let region = CountingRegion::new(vec![0.0], vec![1.0]);
            let c = IntegratedCounter::new(&affine_field(), &region, 0.05, 3.0).unwrap();
            let (t2, t3) = (t1 + d1, t1 + d1 + d2);
            let a = c.integral(t2).unwrap() - c.integral(t1).unwrap();
            let b = c.integral(t3).unwrap() - c.integral(t2).unwrap();
            let whole = c.integral(t3).unwrap() - c.integral(t1).unwrap();
            prop_assert!((a + b - whole).abs() <= 1e-12 * whole.abs().max(1.0));
        }
    }
}
