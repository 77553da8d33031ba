//! Scalar fields on R^d: constants, polynomials and multilinear grid samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Poly {
    pub terms: Vec<Monomial>,
}

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly { terms: vec![Monomial { coeff: c, powers: vec![] }] }
    }

    /// `c * x_axis`
    pub fn linear(axis: usize, c: f64) -> Self {
        let mut powers = vec![0; axis + 1];
        powers[axis] = 1;
        Poly { terms: vec![Monomial { coeff: c, powers }] }
    }

    pub fn term(mut self, coeff: f64, powers: &[u32]) -> Self {
        self.terms.push(Monomial { coeff, powers: powers.to_vec() });
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                m.powers
                    .iter()
                    .enumerate()
                    .fold(m.coeff, |acc, (i, &p)| if p == 0 { acc } else { acc * x[i].powi(p as i32) })
            })
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter_map(|m| {
                let p = m.powers.get(axis).copied().unwrap_or(0);
                if p == 0 || m.coeff == 0.0 {
                    return None;
                }
                let mut powers = m.powers.clone();
                powers[axis] = p - 1;
                Some(Monomial { coeff: m.coeff * p as f64, powers })
            })
            .collect();
        Poly { terms }
    }

    pub fn depends_on(&self, axis: usize) -> bool {
        self.terms.iter().any(|m| m.coeff != 0.0 && m.powers.get(axis).copied().unwrap_or(0) > 0)
    }

    pub fn max_axis(&self) -> usize {
        self.terms.iter().map(|m| m.powers.len()).max().unwrap_or(0)
    }

    /// Total degree of the highest nonzero term.
    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|m| m.coeff != 0.0)
            .map(|m| m.powers.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

/// Tensor grid with inclusive endpoints, last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

impl UniformGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != n.len() || lo.is_empty() {
            return Err(Error::InvalidSpec("grid axes have inconsistent lengths".into()));
        }
        for k in 0..lo.len() {
            if n[k] == 0 || !(hi[k] >= lo[k]) || (n[k] > 1 && hi[k] == lo[k]) {
                return Err(Error::InvalidSpec(format!("grid axis {k} is degenerate")));
            }
        }
        Ok(UniformGrid { lo, hi, n })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        if self.n[axis] > 1 {
            (self.hi[axis] - self.lo[axis]) / (self.n[axis] - 1) as f64
        } else {
            0.0
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.spacing(axis)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.n[k];
            flat /= self.n[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(k, &i)| self.coord(k, i)).collect()
    }

    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriddedField {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl GriddedField {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidSpec(format!(
                "gridded field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GriddedField { grid, values })
    }

    /// Multilinear interpolation, clamped to the grid box.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.grid.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let n = self.grid.n[k];
            if n == 1 {
                continue;
            }
            let t = ((x[k] - self.grid.lo[k]) / self.grid.spacing(k)).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                if self.grid.n[k] == 1 {
                    if bit == 1 {
                        w = 0.0;
                    }
                    idx[k] = 0;
                    continue;
                }
                idx[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * self.values[self.grid.flat_index(&idx)];
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarField {
    Constant(f64),
    Polynomial(Poly),
    Gridded(GriddedField),
}

impl Default for ScalarField {
    fn default() -> Self {
        ScalarField::Constant(0.0)
    }
}

impl ScalarField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Polynomial(p) => p.eval(x),
            ScalarField::Gridded(g) => g.eval(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        match self {
            ScalarField::Constant(_) => vec![0.0; d],
            ScalarField::Polynomial(p) => (0..d).map(|k| p.derivative(k).eval(x)).collect(),
            ScalarField::Gridded(g) => (0..d)
                .map(|k| {
                    let s = if k < g.grid.dim() { g.grid.spacing(k) } else { 0.0 };
                    if s == 0.0 {
                        return 0.0;
                    }
                    let mut a = x.to_vec();
                    let mut b = x.to_vec();
                    a[k] -= 0.5 * s;
                    b[k] += 0.5 * s;
                    (g.eval(&b) - g.eval(&a)) / s
                })
                .collect(),
        }
    }

    pub fn depends_on(&self, axis: usize) -> bool {
        match self {
            ScalarField::Constant(_) => false,
            ScalarField::Polynomial(p) => p.depends_on(axis),
            ScalarField::Gridded(g) => axis < g.grid.dim() && g.grid.n[axis] > 1,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            ScalarField::Constant(_) => true,
            ScalarField::Polynomial(p) => p.degree() == 0,
            ScalarField::Gridded(g) => g.values.iter().all(|&v| v == g.values[0]),
        }
    }

    /// Coefficients (a, c) with field = a·x + c when the field is affine, else None.
    pub fn affine(&self, d: usize) -> Option<(Vec<f64>, f64)> {
        match self {
            ScalarField::Constant(c) => Some((vec![0.0; d], *c)),
            ScalarField::Polynomial(p) if p.degree() <= 1 => {
                let zero = vec![0.0; d.max(p.max_axis())];
                let c = p.eval(&zero);
                let a = (0..d).map(|k| p.derivative(k).eval(&zero)).collect();
                Some((a, c))
            }
            _ => None,
        }
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        match self {
            ScalarField::Constant(v) => ScalarField::Constant(c * v),
            ScalarField::Polynomial(p) => ScalarField::Polynomial(Poly {
                terms: p.terms.iter().map(|m| Monomial { coeff: c * m.coeff, powers: m.powers.clone() }).collect(),
            }),
            ScalarField::Gridded(g) => ScalarField::Gridded(GriddedField {
                grid: g.grid.clone(),
                values: g.values.iter().map(|v| c * v).collect(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_eval_and_derivative() {
        // 3 x0^2 x1 - x2 + 0.5
        let p = Poly::constant(0.5).term(3.0, &[2, 1]).term(-1.0, &[0, 0, 1]);
        let x = [2.0, -1.0, 4.0];
        assert_eq!(p.eval(&x), 3.0 * 4.0 * -1.0 - 4.0 + 0.5);
        assert_eq!(p.derivative(0).eval(&x), 6.0 * 2.0 * -1.0);
        assert_eq!(p.derivative(2).eval(&x), -1.0);
        assert!(p.depends_on(1) && !p.depends_on(3));
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn gridded_interpolation_reproduces_affine_data() {
        let grid = UniformGrid::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![5, 9]).unwrap();
        let vals = grid.sample(|x| 2.0 * x[0] - 3.0 * x[1] + 1.0);
        let f = GriddedField::new(grid, vals).unwrap();
        for &(a, b) in &[(0.13, 0.77), (0.5, -0.31), (0.99, 0.0)] {
            assert!((f.eval(&[a, b]) - (2.0 * a - 3.0 * b + 1.0)).abs() < 1e-13);
        }
        let g = ScalarField::Gridded(f).gradient(&[0.4, 0.2]);
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn affine_detection() {
        let f = ScalarField::Polynomial(Poly::linear(1, 2.0).term(-0.5, &[]));
        let (a, c) = f.affine(3).unwrap();
        assert_eq!(a, vec![0.0, 2.0, 0.0]);
        assert_eq!(c, -0.5);
        assert!(ScalarField::Polynomial(Poly::default().term(1.0, &[2])).affine(1).is_none());
    }
}
