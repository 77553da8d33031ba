//! One-dimensional adaptive Gauss–Kronrod and tensor midpoint quadrature.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { rel_tol: 1e-10, abs_tol: 1e-300, max_intervals: 20_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = hw * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * hw, ((k - g) * hw).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Adaptive G7/K15 on [a, b], pre-split at `breaks` (points outside (a, b) are ignored).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], cfg: &QuadConfig) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut nodes = vec![lo];
    nodes.extend(cuts);
    nodes.push(hi);

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    for w in nodes.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        evals += 15;
        total += v;
        err += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, error: e });
    }
    while err > cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
        if heap.len() >= cfg.max_intervals {
            return Err(Error::QuadratureDiverged { tol: cfg.rel_tol, estimate: err });
        }
        let p = heap.pop().expect("nonempty heap");
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            // interval exhausted at machine precision
            heap.push(Piece { error: 0.0, ..p });
            err = heap.iter().map(|q| q.error).sum();
            if err == 0.0 {
                break;
            }
            continue;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
        if err < 0.0 {
            err = heap.iter().map(|q| q.error).sum();
        }
    }
    // resum to limit drift from incremental updates
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult { value: sign * value, error, evaluations: evals })
}

/// Midpoint rule on the box [lo, hi] with `n` cells per axis.
pub fn midpoint_box<F: Fn(&[f64]) -> f64 + Sync>(f: &F, lo: &[f64], hi: &[f64], n: usize) -> f64 {
    let d = lo.len();
    let h: Vec<f64> = (0..d).map(|k| (hi[k] - lo[k]) / n as f64).collect();
    let cell: f64 = h.iter().product();
    let total = n.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for flat in 0..total {
        let mut r = flat;
        for k in (0..d).rev() {
            x[k] = lo[k] + (r % n) as f64 * h[k] + 0.5 * h[k];
            r /= n;
        }
        acc += f(&x);
    }
    acc * cell
}

/// Tensor midpoint with doubling and Richardson extrapolation (second order).
pub fn midpoint_richardson<F: Fn(&[f64]) -> f64 + Sync>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    rel_tol: f64,
    max_points: usize,
) -> Result<QuadResult> {
    let d = lo.len().max(1) as u32;
    let mut n = 8usize;
    let mut coarse = midpoint_box(f, lo, hi, n);
    let mut evals = n.pow(d);
    let mut last_extrap: Option<f64> = None;
    loop {
        let fine_n = 2 * n;
        if fine_n.pow(d) > max_points {
            return Err(Error::QuadratureDiverged {
                tol: rel_tol,
                estimate: last_extrap.map_or(f64::INFINITY, |v| (v - coarse).abs()),
            });
        }
        let fine = midpoint_box(f, lo, hi, fine_n);
        evals += fine_n.pow(d);
        let extrap = fine + (fine - coarse) / 3.0;
        if let Some(prev) = last_extrap {
            let err = (extrap - prev).abs();
            if err <= rel_tol * extrap.abs() || (extrap == 0.0 && fine == 0.0) {
                return Ok(QuadResult { value: extrap, error: err, evaluations: evals });
            }
        }
        last_extrap = Some(extrap);
        coarse = fine;
        n = fine_n;
    }
}
