use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Inverse metric g^{jk}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Constant(Vec<Vec<f64>>),
    Field(Vec<Vec<ScalarField>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagneticField {
    /// Constant intensity matrix F_{jk}.
    Constant(Vec<Vec<f64>>),
    /// Vector potential V_j(x); F_{jk} = ∂_j V_k − ∂_k V_j.
    VectorPotential(Vec<ScalarField>),
}

/// Smoothness class (l, σ), ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub l: f64,
    pub sigma: f64,
}

impl Default for Smoothness {
    fn default() -> Self {
        Smoothness { l: 1.0, sigma: 1.0 }
    }
}

impl PartialOrd for Smoothness {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        match self.l.partial_cmp(&o.l)? {
            std::cmp::Ordering::Equal => self.sigma.partial_cmp(&o.sigma),
            ord => Some(ord),
        }
    }
}

/// Cutoff ψ. The bump is (1 − |x−c|²/R²)₊^m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    Bump { center: Vec<f64>, radius: f64, order: u32 },
    Zero,
    One,
}

impl Cutoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Cutoff::Zero => 0.0,
            Cutoff::One => 1.0,
            Cutoff::Bump { center, radius, order } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let t = 1.0 - r2 / (radius * radius);
                if t > 0.0 {
                    t.powi(*order as i32)
                } else {
                    0.0
                }
            }
        }
    }

    /// Integral of the bump over `k` coordinates with the remaining ones at squared
    /// distance `t2` from the centre.
    pub fn marginal(&self, k: usize, t2: f64) -> f64 {
        match self {
            Cutoff::Zero => 0.0,
            Cutoff::One => {
                if k == 0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            Cutoff::Bump { radius, order, .. } => {
                let r2 = radius * radius;
                let s = r2 - t2;
                if s <= 0.0 {
                    return 0.0;
                }
                let m = *order as f64;
                let kf = k as f64;
                std::f64::consts::PI.powf(kf / 2.0) * gamma(m + 1.0) / gamma(m + 1.0 + kf / 2.0) * s.powf(m + kf / 2.0)
                    / r2.powf(m)
            }
        }
    }

    /// ∫ψ over R^d.
    pub fn integral(&self, d: usize) -> f64 {
        self.marginal(d, 0.0)
    }

    pub fn support_box(&self, d: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Cutoff::Bump { center, radius, .. } => Some((
                (0..d).map(|k| center[k] - radius).collect(),
                (0..d).map(|k| center[k] + radius).collect(),
            )),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub d: usize,
    pub metric: Metric,
    pub field: MagneticField,
    pub potential: ScalarField,
    pub mu: f64,
    pub h: f64,
    #[serde(default)]
    pub smoothness: Smoothness,
    pub cutoff: Cutoff,
}

fn to_matrix(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidSpec(format!("{what} must be {d}x{d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl OperatorSpec {
    /// Flat metric, constant field, constant potential, unit bump at the origin.
    pub fn constant(field: DMatrix<f64>, potential: f64, mu: f64, h: f64) -> Self {
        let d = field.nrows();
        let rows = |m: &DMatrix<f64>| (0..d).map(|i| (0..d).map(|j| m[(i, j)]).collect()).collect();
        OperatorSpec {
            d,
            metric: Metric::Constant(rows(&DMatrix::identity(d, d))),
            field: MagneticField::Constant(rows(&field)),
            potential: ScalarField::Constant(potential),
            mu,
            h,
            smoothness: Smoothness::default(),
            cutoff: Cutoff::Bump { center: vec![0.0; d], radius: 1.0, order: 4 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 {
            return Err(Error::InvalidSpec("dimension d must be at least 1".into()));
        }
        if !(self.mu >= 1.0) || !self.mu.is_finite() {
            return Err(Error::InvalidSpec(format!("mu = {} must satisfy mu >= 1", self.mu)));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::InvalidSpec(format!("h = {} must lie in (0, 1]", self.h)));
        }
        match &self.metric {
            Metric::Constant(rows) => {
                let g = to_matrix(rows, d, "metric")?;
                check_metric(&g)?;
            }
            Metric::Field(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidSpec(format!("metric must be {d}x{d}")));
                }
                check_metric(&self.metric_at(&self.reference_point()))?;
            }
        }
        match &self.field {
            MagneticField::Constant(rows) => {
                let f = to_matrix(rows, d, "field")?;
                let asym = (&f + f.transpose()).abs().max();
                if asym > 1e-12 {
                    return Err(Error::NotSkew(asym));
                }
            }
            MagneticField::VectorPotential(v) => {
                if v.len() != d {
                    return Err(Error::InvalidSpec(format!("vector potential needs {d} components")));
                }
            }
        }
        if let Cutoff::Bump { center, radius, .. } = &self.cutoff {
            if center.len() != d || !(*radius > 0.0) {
                return Err(Error::InvalidSpec("cutoff centre must have d entries and radius > 0".into()));
            }
        }
        Ok(())
    }

    /// Cutoff centre, or the origin.
    pub fn reference_point(&self) -> Vec<f64> {
        match &self.cutoff {
            Cutoff::Bump { center, .. } => center.clone(),
            _ => vec![0.0; self.d],
        }
    }

    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.metric {
            Metric::Constant(rows) => DMatrix::from_fn(self.d, self.d, |i, j| rows[i][j]),
            Metric::Field(rows) => DMatrix::from_fn(self.d, self.d, |i, j| rows[i][j].eval(x)),
        }
    }

    pub fn metric_is_constant(&self) -> bool {
        match &self.metric {
            Metric::Constant(_) => true,
            Metric::Field(rows) => rows.iter().flatten().all(|f| f.is_constant()),
        }
    }

    pub fn field_at(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.field {
            MagneticField::Constant(rows) => DMatrix::from_fn(self.d, self.d, |i, j| rows[i][j]),
            MagneticField::VectorPotential(v) => {
                let grads: Vec<Vec<f64>> = v.iter().map(|c| c.gradient(x)).collect();
                DMatrix::from_fn(self.d, self.d, |j, k| grads[k][j] - grads[j][k])
            }
        }
    }

    pub fn field_is_constant(&self) -> bool {
        match &self.field {
            MagneticField::Constant(_) => true,
            MagneticField::VectorPotential(v) => v.iter().all(|c| c.affine(self.d).is_some()),
        }
    }

    /// Vector potential at x. A constant field uses V_k = Σ_{j<k} F_{jk} x_j.
    pub fn vector_potential_at(&self, x: &[f64]) -> Vec<f64> {
        match &self.field {
            MagneticField::Constant(rows) => {
                (0..self.d).map(|k| (0..k).map(|j| rows[j][k] * x[j]).sum()).collect()
            }
            MagneticField::VectorPotential(v) => v.iter().map(|c| c.eval(x)).collect(),
        }
    }

    pub fn potential_at(&self, x: &[f64]) -> f64 {
        self.potential.eval(x)
    }

    /// √g = det(g^{jk})^{-1/2}.
    pub fn sqrt_g(&self, x: &[f64]) -> f64 {
        self.metric_at(x).determinant().powf(-0.5)
    }

    /// Whether the local data (metric, field, potential) vary along `axis`.
    pub fn depends_on(&self, axis: usize) -> bool {
        let metric = match &self.metric {
            Metric::Constant(_) => false,
            Metric::Field(rows) => rows.iter().flatten().any(|f| f.depends_on(axis)),
        };
        let field = match &self.field {
            MagneticField::Constant(_) => false,
            MagneticField::VectorPotential(v) => v.iter().any(|c| c.depends_on(axis) && c.affine(self.d).is_none()),
        };
        metric || field || self.potential.depends_on(axis)
    }
}

fn check_metric(g: &DMatrix<f64>) -> Result<()> {
    let asym = (g - g.transpose()).abs().max();
    if asym > 1e-12 * g.abs().max().max(1.0) {
        return Err(Error::InvalidSpec(format!("metric not symmetric (asymmetry {asym:e})")));
    }
    let min = g.clone().symmetric_eigenvalues().min();
    if !(min > 0.0) {
        return Err(Error::InvalidSpec(format!("metric not positive definite (min eigenvalue {min:e})")));
    }
    Ok(())
}

/// ω_q = π^{q/2}/Γ(q/2+1), the volume of the unit ball in R^q.
pub fn unit_ball_volume(q: usize) -> f64 {
    let h = q as f64 / 2.0;
    std::f64::consts::PI.powf(h) / gamma(h + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-14);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn bump_marginal_matches_direct_quadrature() {
        let psi = Cutoff::Bump { center: vec![0.0, 0.0], radius: 0.8, order: 3 };
        let t = 0.3;
        let edge = (0.64f64 - t * t).sqrt();
        let cfg = crate::quad::QuadConfig { rel_tol: 1e-14, ..Default::default() };
        let direct = crate::quad::integrate(|s| psi.eval(&[s, t]), -0.8, 0.8, &[-edge, edge], &cfg)
        .unwrap()
        .value;
        assert!((psi.marginal(1, t * t) - direct).abs() < 1e-12, "{} vs {direct}", psi.marginal(1, t * t));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut f = DMatrix::zeros(3, 3);
        f[(0, 1)] = 1.0;
        f[(1, 0)] = -1.0;
        let good = OperatorSpec::constant(f.clone(), 0.0, 2.0, 0.1);
        assert!(good.validate().is_ok());
        let mut bad = good.clone();
        bad.mu = 0.5;
        assert!(matches!(bad.validate(), Err(Error::InvalidSpec(_))));
        f[(1, 0)] = -0.9;
        let skew = OperatorSpec::constant(f, 0.0, 2.0, 0.1);
        assert!(matches!(skew.validate(), Err(Error::NotSkew(_))));
    }

    #[test]
    fn derived_field_from_potential() {
        use crate::field::Poly;
        let mut spec = OperatorSpec::constant(DMatrix::zeros(3, 3), 0.0, 1.0, 0.5);
        // V = (0, x0 + x0 x2, 0) → F01 = 1 + x2, F21 = x0·(−1)·(−1)
        spec.field = MagneticField::VectorPotential(vec![
            ScalarField::Constant(0.0),
            ScalarField::Polynomial(Poly::linear(0, 1.0).term(1.0, &[1, 0, 1])),
            ScalarField::Constant(0.0),
        ]);
        let x = [0.5, 0.0, 2.0];
        let f = spec.field_at(&x);
        assert_eq!(f[(0, 1)], 3.0);
        assert_eq!(f[(2, 1)], 0.5);
        assert_eq!((&f + f.transpose()).abs().max(), 0.0);
        assert!(spec.depends_on(0) && spec.depends_on(2) && !spec.depends_on(1));
    }

    #[test]
    fn smoothness_order_is_lexicographic() {
        let a = Smoothness { l: 1.0, sigma: 2.0 };
        let b = Smoothness { l: 2.0, sigma: 0.0 };
        assert!(a < b);
        assert!(Smoothness { l: 1.0, sigma: 1.0 } < a);
    }
}
