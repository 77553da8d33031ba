//! Regime labels, the theorem bound registry, remainder measurement, sweeps
//! and log–log exponent fits.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_geometry::{compute_eigenstructure, OperatorSpec, DEFAULT_EPS0, DEFAULT_EPS_GROUP};
use crate::oscillator_algebra::{build_resonant_model, correction_term, ResonantVariant};
use crate::spectral_oracle::{
    assemble_mixed, eigensolve, separable_oracle, weighted_counting, Boundary, GridConfig, SeparableConfig,
    SolverConfig, Target,
};
use crate::weyl_law::{weyl_integral, WeylQuadConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Weak,
    Intermediate,
    Strong,
    Superstrong,
    Ultrastrong,
}

impl Regime {
    pub const ALL: [Regime; 5] =
        [Regime::Weak, Regime::Intermediate, Regime::Strong, Regime::Superstrong, Regime::Ultrastrong];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Weak => "weak",
            Regime::Intermediate => "intermediate",
            Regime::Strong => "strong",
            Regime::Superstrong => "superstrong",
            Regime::Ultrastrong => "ultrastrong",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unspecified constants C and ε, looked up by key; missing keys fall back to
/// `default` and then to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constants {
    pub c: BTreeMap<String, f64>,
    pub eps: BTreeMap<String, f64>,
    /// κ in ν(μh) = (μh)^κ.
    pub nu_exponent: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants { c: BTreeMap::new(), eps: BTreeMap::new(), nu_exponent: 1.0 }
    }
}

impl Constants {
    fn lookup(map: &BTreeMap<String, f64>, key: &str) -> f64 {
        map.get(key).or_else(|| map.get("default")).copied().unwrap_or(1.0)
    }

    pub fn c(&self, key: &str) -> f64 {
        Self::lookup(&self.c, key)
    }

    pub fn eps(&self, key: &str) -> f64 {
        Self::lookup(&self.eps, key)
    }

    /// Multiplier for a registered bound: `c[theorem]`, else `c["bound"]`, else the default.
    pub fn bound_c(&self, theorem: &str) -> f64 {
        self.c.get(theorem).copied().unwrap_or_else(|| self.c("bound"))
    }
}

/// Evaluated thresholds and length scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// C(h|log h|)^{−q/(q+2)}.
    pub mu1: f64,
    /// C(h|log h|)^{−1/2}.
    pub mu2: f64,
    /// εh⁻¹|log h|⁻¹.
    pub mu3: f64,
    /// Ch^{−q/(q+2)}.
    pub mu_star: f64,
    /// εh⁻¹.
    pub superstrong: f64,
    /// Ch⁻¹.
    pub ultrastrong: f64,
    /// max(h^{1/3}, μ^{−1/2}).
    pub rho_bar0: f64,
    /// C(μh|log h|)^{1/2}.
    pub rho_bar1: f64,
    /// (μh)^{1/2}.
    pub rho_star1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub name: Regime,
    pub mu: f64,
    pub h: f64,
    pub q: usize,
    pub thresholds: Thresholds,
    /// |ln(μ/μ_t)| to the nearest bucket threshold μ_t, and its name.
    pub margin: f64,
    pub nearest: String,
    pub constants: Constants,
}

pub fn thresholds(mu: f64, h: f64, q: usize, k: &Constants) -> Thresholds {
    let lg = h.ln().abs();
    let qf = q as f64;
    Thresholds {
        mu1: k.c("mu1") * (h * lg).powf(-qf / (qf + 2.0)),
        mu2: k.c("mu2") * (h * lg).powf(-0.5),
        mu3: k.eps("mu3") / (h * lg),
        mu_star: k.c("mu_star") * h.powf(-qf / (qf + 2.0)),
        superstrong: k.eps("superstrong") / h,
        ultrastrong: k.c("ultrastrong") / h,
        rho_bar0: h.cbrt().max(mu.powf(-0.5)),
        rho_bar1: k.c("rho1") * (mu * h * lg).sqrt(),
        rho_star1: (mu * h).sqrt(),
    }
}

/// Buckets μ top-down: ultrastrong, superstrong, strong, intermediate, weak.
pub fn classify_regime(mu: f64, h: f64, q: usize, constants: &Constants) -> RegimeLabel {
    let t = thresholds(mu, h, q, constants);
    let name = if mu >= t.ultrastrong {
        Regime::Ultrastrong
    } else if mu >= t.superstrong {
        Regime::Superstrong
    } else if mu >= t.mu3 {
        Regime::Strong
    } else if mu >= t.mu2 {
        Regime::Intermediate
    } else {
        Regime::Weak
    };
    let (margin, nearest) = [("mu2", t.mu2), ("mu3", t.mu3), ("superstrong", t.superstrong), ("ultrastrong", t.ultrastrong)]
        .iter()
        .map(|&(n, v)| ((mu / v).ln().abs(), n))
        .fold((f64::INFINITY, ""), |a, b| if b.0 < a.0 { b } else { a });
    RegimeLabel { name, mu, h, q, thresholds: t, margin, nearest: nearest.to_string(), constants: constants.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QGuard {
    Any,
    One,
    AtLeastTwo,
}

impl QGuard {
    fn admits(self, q: usize) -> bool {
        match self {
            QGuard::Any => true,
            QGuard::One => q == 1,
            QGuard::AtLeastTwo => q >= 2,
        }
    }
}

/// Dimensions and smoothness entering a bound. (l̄, σ̄) is the second
/// smoothness pair of the weak microhyperbolic bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub d: usize,
    pub r: usize,
    pub q: usize,
    pub l: f64,
    pub sigma: f64,
    pub l_bar: f64,
    pub sigma_bar: f64,
}

impl BoundParams {
    pub fn new(d: usize, r: usize, q: usize, l: f64, sigma: f64) -> Self {
        BoundParams { d, r, q, l, sigma, l_bar: l, sigma_bar: sigma }
    }
}

struct Vars {
    mu: f64,
    h: f64,
    /// |log h|
    lg: f64,
    d: f64,
    r: f64,
    q: f64,
    l: f64,
    s: f64,
    lb: f64,
    sb: f64,
    c: f64,
    nu: f64,
}

pub struct TheoremEntry {
    pub id: &'static str,
    pub formula: &'static str,
    pub regimes: &'static [Regime],
    pub q_guard: QGuard,
    eval: fn(&Vars) -> f64,
}

use Regime::{Intermediate as I, Strong as S, Superstrong as SS, Ultrastrong as U, Weak as W};

static REGISTRY: &[TheoremEntry] = &[
    TheoremEntry {
        id: "weak",
        formula: "C h^{1-d} + C mu h^{1-d} (mu h |log h|)^{q/2}",
        regimes: &[W],
        q_guard: QGuard::Any,
        eval: |v| v.c * v.h.powf(1.0 - v.d) + v.c * v.mu * v.h.powf(1.0 - v.d) * (v.mu * v.h * v.lg).powf(v.q / 2.0),
    },
    TheoremEntry {
        id: "weak-mh",
        formula: "C h^{1-d} + C h^{-d} (mu h)^{l+q/2} |log h|^{l+q/2-sigma} \
                  + C mu h^{-d} (mu h)^{lb+1+q/2} |log h|^{lb+1+q/2-sb}",
        regimes: &[W],
        q_guard: QGuard::Any,
        eval: |v| {
            let mh = v.mu * v.h;
            let a = v.l + v.q / 2.0;
            let b = v.lb + 1.0 + v.q / 2.0;
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.h.powf(-v.d) * mh.powf(a) * v.lg.powf(a - v.s)
                + v.c * v.mu * v.h.powf(-v.d) * mh.powf(b) * v.lg.powf(b - v.sb)
        },
    },
    TheoremEntry {
        id: "weak-mh-moderate",
        formula: "C h^{1-d} + C h^{-d} (mu h)^{l+q/2} |log h|^{l+q/2-sigma}",
        regimes: &[W, I],
        q_guard: QGuard::Any,
        eval: |v| {
            let a = v.l + v.q / 2.0;
            v.c * v.h.powf(1.0 - v.d) + v.c * v.h.powf(-v.d) * (v.mu * v.h).powf(a) * v.lg.powf(a - v.s)
        },
    },
    TheoremEntry {
        id: "intermediate-mh",
        formula: "C h^{1-d} + C h^{-d} (mu h |log h|)^{q/2} mu^{-l} |log h|^{-sigma}",
        regimes: &[I],
        q_guard: QGuard::Any,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.h.powf(-v.d) * (v.mu * v.h * v.lg).powf(v.q / 2.0) * v.mu.powf(-v.l) * v.lg.powf(-v.s)
        },
    },
    TheoremEntry {
        id: "intermediate-q2",
        formula: "C h^{1-d} + C mu h^{5/3-d}",
        regimes: &[I],
        q_guard: QGuard::AtLeastTwo,
        eval: |v| v.c * v.h.powf(1.0 - v.d) + v.c * v.mu * v.h.powf(5.0 / 3.0 - v.d),
    },
    TheoremEntry {
        id: "intermediate-q1",
        formula: "C h^{1-d} + C mu h^{4/3-d} + C mu^{1/2} h^{1-d}",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d) + v.c * v.mu * v.h.powf(4.0 / 3.0 - v.d) + v.c * v.mu.sqrt() * v.h.powf(1.0 - v.d)
        },
    },
    TheoremEntry {
        id: "intermediate-q1-corrected",
        formula: "C h^{1-d} + C mu h^{4/3-d} + C mu^{1-l/2} h^{1-d} |log h|^{-sigma/2}",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.mu * v.h.powf(4.0 / 3.0 - v.d)
                + v.c * v.mu.powf(1.0 - v.l / 2.0) * v.h.powf(1.0 - v.d) * v.lg.powf(-v.s / 2.0)
        },
    },
    TheoremEntry {
        id: "correction-magnitude",
        formula: "C mu^{1/2} h^{1-d}",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| v.c * v.mu.sqrt() * v.h.powf(1.0 - v.d),
    },
    TheoremEntry {
        id: "diophantine-q2",
        formula: "C h^{1-d} + C nu h^{2/3-d}",
        regimes: &[I],
        q_guard: QGuard::AtLeastTwo,
        eval: |v| v.c * v.h.powf(1.0 - v.d) + v.c * v.nu * v.h.powf(2.0 / 3.0 - v.d),
    },
    TheoremEntry {
        id: "diophantine-q1",
        formula: "C h^{1-d} + C mu^{-1/2} h^{1/2-d} |log h|^{1/2} + C nu (h^{1/3-d} + mu^{-1/2} h^{-d})",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.mu.powf(-0.5) * v.h.powf(0.5 - v.d) * v.lg.sqrt()
                + v.c * v.nu * (v.h.powf(1.0 / 3.0 - v.d) + v.mu.powf(-0.5) * v.h.powf(-v.d))
        },
    },
    TheoremEntry {
        id: "diophantine-q1-corrected",
        formula: "C h^{1-d} + C mu^{1/2-l} h^{1/2-d} |log h|^{1/2-sigma} \
                  + C (nu + mu^{-1}) (h^{1/3-d} + mu^{-l/2} h^{-d} |log h|^{-sigma/2}) h^{-d}",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.mu.powf(0.5 - v.l) * v.h.powf(0.5 - v.d) * v.lg.powf(0.5 - v.s)
                + v.c
                    * (v.nu + 1.0 / v.mu)
                    * (v.h.powf(1.0 / 3.0 - v.d) + v.mu.powf(-v.l / 2.0) * v.h.powf(-v.d) * v.lg.powf(-v.s / 2.0))
                    * v.h.powf(-v.d)
        },
    },
    TheoremEntry {
        id: "diophantine-q1-nonresonant",
        formula: "C h^{1-d} + C mu^{3/2-l} h^{3/2-d} |log h|^{1/2-sigma} \
                  + C nu (h^{1/3-d} + mu^{-l/2} h^{-d} |log h|^{-sigma/2})",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.mu.powf(1.5 - v.l) * v.h.powf(1.5 - v.d) * v.lg.powf(0.5 - v.s)
                + v.c * v.nu * (v.h.powf(1.0 / 3.0 - v.d) + v.mu.powf(-v.l / 2.0) * v.h.powf(-v.d) * v.lg.powf(-v.s / 2.0))
        },
    },
    TheoremEntry {
        id: "multiplicity-q2",
        formula: "C h^{1-d} + C mu h^{1-d+ql/(l+2)} |log mu|^{-q sigma/(l+2)}",
        regimes: &[I],
        q_guard: QGuard::AtLeastTwo,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.mu * v.h.powf(1.0 - v.d + v.q * v.l / (v.l + 2.0)) * v.mu.ln().abs().powf(-v.q * v.s / (v.l + 2.0))
        },
    },
    TheoremEntry {
        id: "multiplicity-q1-corrected",
        formula: "C h^{1-d} + C mu h^{2-d-2/(l+2)} |log h|^{-sigma/(l+2)} \
                  + C h^{1-d} (mu h |log h|)^{1/2} mu^{1-l} |log h|^{-sigma} \
                  + C mu^{1-l/2} h^{1-d} |log h|^{-sigma/2} + C mu^{(2l+1)/(3l)} h^{4/3-d} |log h|^{-sigma/(3l)}",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| multiplicity_q1(v) + v.c * v.mu.powf((2.0 * v.l + 1.0) / (3.0 * v.l)) * v.h.powf(4.0 / 3.0 - v.d) * v.lg.powf(-v.s / (3.0 * v.l)),
    },
    TheoremEntry {
        id: "multiplicity-q1-nonresonant",
        formula: "C h^{1-d} + C mu h^{2-d-2/(l+2)} |log h|^{-sigma/(l+2)} \
                  + C h^{1-d} (mu h |log h|)^{1/2} mu^{1-l} |log h|^{-sigma} + C mu^{1-l/2} h^{1-d} |log h|^{-sigma/2}",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: multiplicity_q1,
    },
    TheoremEntry {
        id: "multiplicity-diophantine-q2",
        formula: "C h^{1-d} + C nu h^{1-d+(l-2)/(l+2)} |log h|^{-2 sigma/(l+2)}",
        regimes: &[I],
        q_guard: QGuard::AtLeastTwo,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.nu * v.h.powf(1.0 - v.d + (v.l - 2.0) / (v.l + 2.0)) * v.lg.powf(-2.0 * v.s / (v.l + 2.0))
        },
    },
    TheoremEntry {
        id: "multiplicity-diophantine-q1",
        formula: "C h^{1-d} + C h^{-d} (mu h |log h|)^{1/2} mu^{-l} |log h|^{-sigma} \
                  + C nu (h^{1-d-2/(l+2)} |log h|^{-sigma/(l+2)} + C mu^{-l/2} h^{-d} |log h|^{-sigma/2})",
        regimes: &[I],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.h.powf(-v.d) * (v.mu * v.h * v.lg).sqrt() * v.mu.powf(-v.l) * v.lg.powf(-v.s)
                + v.c
                    * v.nu
                    * (v.h.powf(1.0 - v.d - 2.0 / (v.l + 2.0)) * v.lg.powf(-v.s / (v.l + 2.0))
                        + v.c * v.mu.powf(-v.l / 2.0) * v.h.powf(-v.d) * v.lg.powf(-v.s / 2.0))
        },
    },
    TheoremEntry {
        id: "strong-tau-dependent",
        formula: "C h^{1-d} exp(C mu h |log h|) |log h|^{1-sigma}",
        regimes: &[S, SS],
        q_guard: QGuard::Any,
        eval: |v| v.c * v.h.powf(1.0 - v.d) * (v.c * v.mu * v.h * v.lg).exp() * v.lg.powf(1.0 - v.s),
    },
    TheoremEntry {
        id: "strong-multiplicity-q1",
        formula: "C h^{1-d} + C mu h^{2-d-2/(l+2)} |log h|^{-l sigma/(2(l+2))} + C mu^{1/2} h^{1-d}",
        regimes: &[S, SS],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * v.h.powf(1.0 - v.d)
                + v.c * v.mu * v.h.powf(2.0 - v.d - 2.0 / (v.l + 2.0)) * v.lg.powf(-v.l * v.s / (2.0 * (v.l + 2.0)))
                + v.c * v.mu.sqrt() * v.h.powf(1.0 - v.d)
        },
    },
    TheoremEntry {
        id: "ultrastrong",
        formula: "C (mu h)^r h^{1-d}",
        regimes: &[U],
        q_guard: QGuard::Any,
        eval: |v| v.c * (v.mu * v.h).powf(v.r) * v.h.powf(1.0 - v.d),
    },
    TheoremEntry {
        id: "ultrastrong-q2",
        formula: "C (mu h)^r h^{1-d} + C (mu h)^r h^{1-d+(l-2)/(l+2)} |log h|^{-2 sigma/(l+2)}",
        regimes: &[U],
        q_guard: QGuard::AtLeastTwo,
        eval: |v| {
            let m = (v.mu * v.h).powf(v.r);
            v.c * m * v.h.powf(1.0 - v.d)
                + v.c * m * v.h.powf(1.0 - v.d + (v.l - 2.0) / (v.l + 2.0)) * v.lg.powf(-2.0 * v.s / (v.l + 2.0))
        },
    },
    TheoremEntry {
        id: "ultrastrong-q1",
        formula: "C (mu h)^r h^{1-d-2/(l+2)} |log h|^{-sigma/(2(l+2))}",
        regimes: &[U],
        q_guard: QGuard::One,
        eval: |v| {
            v.c * (v.mu * v.h).powf(v.r) * v.h.powf(1.0 - v.d - 2.0 / (v.l + 2.0)) * v.lg.powf(-v.s / (2.0 * (v.l + 2.0)))
        },
    },
];

fn multiplicity_q1(v: &Vars) -> f64 {
    v.c * v.h.powf(1.0 - v.d)
        + v.c * v.mu * v.h.powf(2.0 - v.d - 2.0 / (v.l + 2.0)) * v.lg.powf(-v.s / (v.l + 2.0))
        + v.c * v.h.powf(1.0 - v.d) * (v.mu * v.h * v.lg).sqrt() * v.mu.powf(1.0 - v.l) * v.lg.powf(-v.s)
        + v.c * v.mu.powf(1.0 - v.l / 2.0) * v.h.powf(1.0 - v.d) * v.lg.powf(-v.s / 2.0)
}

pub fn registry() -> &'static [TheoremEntry] {
    REGISTRY
}

pub fn theorem(id: &str) -> Result<&'static TheoremEntry> {
    REGISTRY.iter().find(|e| e.id == id).ok_or_else(|| Error::UnknownTheorem(id.to_string()))
}

/// Value of a registered bound with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEvaluation {
    pub theorem: String,
    pub formula: String,
    pub value: f64,
    pub regime: Regime,
    pub valid_regimes: Vec<Regime>,
    pub in_regime: bool,
    pub q_admissible: bool,
    pub warning: Option<String>,
}

pub fn predicted_bound(
    theorem_id: &str,
    mu: f64,
    h: f64,
    params: &BoundParams,
    constants: &Constants,
) -> Result<BoundEvaluation> {
    let e = theorem(theorem_id)?;
    let vars = Vars {
        mu,
        h,
        lg: h.ln().abs(),
        d: params.d as f64,
        r: params.r as f64,
        q: params.q as f64,
        l: params.l,
        s: params.sigma,
        lb: params.l_bar,
        sb: params.sigma_bar,
        c: constants.bound_c(theorem_id),
        nu: (mu * h).powf(constants.nu_exponent),
    };
    let value = (e.eval)(&vars);
    let regime = classify_regime(mu, h, params.q, constants).name;
    let in_regime = e.regimes.contains(&regime);
    let q_admissible = e.q_guard.admits(params.q);
    let warning = match (in_regime, q_admissible) {
        (true, true) => None,
        (false, _) => Some(format!("{theorem_id} evaluated outside its regime ({regime})")),
        (true, false) => Some(format!("{theorem_id} evaluated with inadmissible q = {}", params.q)),
    };
    Ok(BoundEvaluation {
        theorem: e.id.to_string(),
        formula: e.formula.to_string(),
        value,
        regime,
        valid_regimes: e.regimes.to_vec(),
        in_regime,
        q_admissible,
        warning,
    })
}

/// Bound used for a sweep row when no theorem is named.
pub fn default_theorem(regime: Regime, q: usize, with_correction: bool) -> &'static str {
    match regime {
        Regime::Weak => "weak",
        Regime::Intermediate if q >= 2 => "intermediate-q2",
        Regime::Intermediate if with_correction => "intermediate-q1-corrected",
        Regime::Intermediate => "intermediate-q1",
        Regime::Strong | Regime::Superstrong => "strong-tau-dependent",
        Regime::Ultrastrong if q >= 2 => "ultrastrong-q2",
        Regime::Ultrastrong => "ultrastrong",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Separable(SeparableConfig),
    Lattice {
        grid: GridConfig,
        /// One entry per axis, or a single entry for all axes.
        bc: Vec<Boundary>,
        #[serde(default)]
        solver: SolverConfig,
        /// When set, each axis gets at least this many sites per min(h, √(h/μ)).
        #[serde(default)]
        sites_per_h: Option<f64>,
    },
}

/// τ-grid tau + [−half_width, half_width] over which the largest |signed remainder| is kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauWindow {
    pub half_width: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionConfig {
    pub model: ResonantVariant,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Plateau radius of the ξ-cutoff; (μh|log h|)^{1/2} when absent.
    #[serde(default)]
    pub rho_cut: Option<f64>,
    /// τ-cutoff width; μh|log h| when absent.
    #[serde(default)]
    pub l0: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_n_max() -> usize {
    12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub oracle: OracleConfig,
    #[serde(default)]
    pub window: Option<TauWindow>,
    #[serde(default)]
    pub correction: Option<CorrectionConfig>,
    /// Registry key of the bound recorded in each row; chosen by regime when absent.
    #[serde(default)]
    pub theorem: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub h: f64,
    /// τ at which the reported values were taken.
    pub tau: f64,
    pub regime: Regime,
    pub principal: f64,
    pub correction: f64,
    pub oracle: f64,
    pub remainder: f64,
    /// oracle − principal − correction.
    pub signed_remainder: f64,
    pub bound: f64,
    pub theorem: String,
    pub bound_in_regime: bool,
    pub runtime_s: f64,
}

impl SweepRow {
    pub fn value(&self, key: &str) -> Option<f64> {
        Some(match key {
            "mu" => self.mu,
            "h" => self.h,
            "tau" => self.tau,
            "principal" => self.principal,
            "correction" => self.correction,
            "oracle" => self.oracle,
            "remainder" => self.remainder,
            "signed_remainder" => self.signed_remainder,
            "relative_remainder" => self.remainder / self.principal,
            "bound" => self.bound,
            "runtime_s" => self.runtime_s,
            _ => return None,
        })
    }
}

fn tau_grid(tau: f64, window: Option<TauWindow>) -> Vec<f64> {
    match window {
        Some(w) if w.points >= 2 => {
            (0..w.points).map(|i| tau - w.half_width + 2.0 * w.half_width * i as f64 / (w.points - 1) as f64).collect()
        }
        _ => vec![tau],
    }
}

fn lattice_grid(spec: &OperatorSpec, grid: &GridConfig, sites_per_h: Option<f64>) -> GridConfig {
    let mut g = grid.clone();
    if let Some(k) = sites_per_h {
        let scale = spec.h.min((spec.h / spec.mu).sqrt());
        for (j, n) in g.n.iter_mut().enumerate() {
            let need = (k * (grid.hi[j] - grid.lo[j]) / scale).ceil() as usize;
            *n = (*n).max(need);
        }
    }
    g
}

/// One row: principal term, optional correction, oracle, and the recorded bound.
pub fn measure_remainder(
    spec: &OperatorSpec,
    tau: f64,
    with_correction: bool,
    cfg: &MeasureConfig,
    constants: &Constants,
) -> Result<SweepRow> {
    let start = Instant::now();
    spec.validate()?;
    let eig = compute_eigenstructure(spec, DEFAULT_EPS0, DEFAULT_EPS_GROUP)?;
    let taus = tau_grid(tau, cfg.window);
    let tau_max = taus.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let correction = if with_correction {
        let cc = cfg
            .correction
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("with_correction needs a correction model".into()))?;
        let model = build_resonant_model(cc.model, cc.omega, spec.mu, spec.h, cc.n_max)?;
        let lg = spec.h.ln().abs();
        let rho = cc.rho_cut.unwrap_or_else(|| (spec.mu * spec.h * lg).sqrt());
        let l0 = cc.l0.unwrap_or(spec.mu * spec.h * lg);
        correction_term(spec, &model, rho, l0)?.stieltjes * spec.cutoff.integral(spec.d)
    } else {
        0.0
    };

    let oracle: Vec<f64> = match &cfg.oracle {
        OracleConfig::Separable(sc) => {
            let s = separable_oracle(spec, sc, tau_max)?;
            taus.iter().map(|&t| s.weighted_counting(&spec.cutoff, t)).collect::<Result<_>>()?
        }
        OracleConfig::Lattice { grid, bc, solver, sites_per_h } => {
            let bcs = if bc.len() == 1 { vec![bc[0]; spec.d] } else { bc.clone() };
            let op = assemble_mixed(spec, &lattice_grid(spec, grid, *sites_per_h), &bcs)?;
            let sol = SolverConfig { vectors: true, ..solver.clone() };
            let s = eigensolve(&op, Target::Below(tau_max), &sol)?;
            taus.iter().map(|&t| weighted_counting(&op, &s, &spec.cutoff, t)).collect::<Result<_>>()?
        }
    };

    let qc = WeylQuadConfig::default();
    let mut best: Option<(f64, f64, f64)> = None;
    for (&t, &o) in taus.iter().zip(&oracle) {
        let p = weyl_integral(spec, t, &qc)?.value;
        let signed = o - p - correction;
        if best.map_or(true, |b| signed.abs() > (b.2 - b.1 - correction).abs()) {
            best = Some((t, p, o));
        }
    }
    let (t, principal, oracle) = best.expect("tau grid is never empty");
    let signed = oracle - principal - correction;

    let label = classify_regime(spec.mu, spec.h, eig.q, constants);
    let id = match &cfg.theorem {
        Some(id) => id.clone(),
        None => default_theorem(label.name, eig.q, with_correction).to_string(),
    };
    let params = BoundParams::new(spec.d, eig.r, eig.q, spec.smoothness.l, spec.smoothness.sigma);
    let bound = predicted_bound(&id, spec.mu, spec.h, &params, constants)?;
    Ok(SweepRow {
        mu: spec.mu,
        h: spec.h,
        tau: t,
        regime: label.name,
        principal,
        correction,
        oracle,
        remainder: signed.abs(),
        signed_remainder: signed,
        bound: bound.value,
        theorem: id,
        bound_in_regime: bound.in_regime,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MuRule {
    /// μ = c·h^exponent.
    Power { c: f64, exponent: f64 },
    /// μ = product/h.
    FixedProduct { product: f64 },
}

impl MuRule {
    pub fn mu(&self, h: f64) -> f64 {
        match *self {
            MuRule::Power { c, exponent } => c * h.powf(exponent),
            MuRule::FixedProduct { product } => product / h,
        }
    }
}

/// `mu_list` runs every (μ, h) pair, h outermost; `mu_rule` runs one μ per h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub mu_list: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_rule: Option<MuRule>,
    pub h_list: Vec<f64>,
    pub tau: f64,
    #[serde(default)]
    pub with_correction: bool,
}

impl SweepConfig {
    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        match (&self.mu_list, &self.mu_rule) {
            (Some(list), None) => Ok(self.h_list.iter().flat_map(|&h| list.iter().map(move |&mu| (mu, h))).collect()),
            (None, Some(rule)) => Ok(self.h_list.iter().map(|&h| (rule.mu(h), h)).collect()),
            _ => Err(Error::InvalidSpec("sweep needs exactly one of mu_list and mu_rule".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub mu: f64,
    pub h: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub x_key: String,
    pub y_key: String,
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
    /// [min x, max x] of the fitted points.
    pub window: [f64; 2],
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
    pub fits: Vec<Fit>,
}

pub const CSV_HEADER: &str = "mu,h,regime,principal,correction,oracle,remainder,bound,runtime_s";

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.6}\n",
                r.mu, r.h, r.regime, r.principal, r.correction, r.oracle, r.remainder, r.bound, r.runtime_s
            ));
        }
        s
    }
}

/// Runs every sweep point in parallel; rows keep the configured order.
/// Failed points are listed, not fatal.
pub fn sweep(base: &OperatorSpec, cfg: &SweepConfig, measure: &MeasureConfig, constants: &Constants) -> Result<SweepReport> {
    let points = cfg.points()?;
    let results: Vec<((f64, f64), Result<SweepRow>)> = points
        .par_iter()
        .map(|&(mu, h)| {
            let spec = OperatorSpec { mu, h, ..base.clone() };
            ((mu, h), measure_remainder(&spec, cfg.tau, cfg.with_correction, measure, constants))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((mu, h), r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(SweepFailure { mu, h, reason: e.to_string() }),
        }
    }
    let mut fits = Vec::new();
    let mut wanted = vec![("h", "remainder"), ("h", "relative_remainder")];
    if cfg.with_correction {
        wanted.push(("mu", "correction"));
    }
    for (x, y) in wanted {
        let usable: Vec<SweepRow> = rows
            .iter()
            .filter(|r| r.value(y).is_some_and(|v| v.is_finite() && v > 0.0))
            .cloned()
            .collect();
        if let Ok(f) = fit_exponent(&usable, x, y) {
            if f.exponent.is_finite() {
                fits.push(f);
            }
        }
    }
    Ok(SweepReport { rows, failures, fits })
}

/// Least-squares fit of log y = exponent·log x + intercept.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64, Vec<f64>)> {
    let n = xs.len().min(ys.len());
    if n < 4 {
        return Err(Error::InsufficientData { need: 4, got: n });
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidSpec("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs[..n].iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys[..n].iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r2, residuals))
}

pub fn fit_exponent(rows: &[SweepRow], x_key: &str, y_key: &str) -> Result<Fit> {
    let get = |r: &SweepRow, k: &str| r.value(k).ok_or_else(|| Error::InvalidSpec(format!("unknown row key '{k}'")));
    let xs: Vec<f64> = rows.iter().map(|r| get(r, x_key)).collect::<Result<_>>()?;
    let ys: Vec<f64> = rows.iter().map(|r| get(r, y_key)).collect::<Result<_>>()?;
    let (exponent, intercept, r2, residuals) = fit_power_law(&xs, &ys)?;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Fit {
        x_key: x_key.to_string(),
        y_key: y_key.to_string(),
        exponent,
        intercept,
        r2,
        residuals,
        window: [lo, hi],
        points: xs.len(),
    })
}
