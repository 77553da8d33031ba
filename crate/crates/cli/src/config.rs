//! Config document: `problem`, `oracle`, `sweep`, `constants`, `output`.
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use magweyl::asymptotics_lab::{
    Constants, CorrectionConfig, MeasureConfig, MuRule, OracleConfig, SweepConfig, TauWindow,
};
use magweyl::field::ScalarField;
use magweyl::field_geometry::{Cutoff, MagneticField, Metric, OperatorSpec, Smoothness};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: Problem,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub output: Output,
}

/// Exactly one of `field` (constant F_{jk}) and `vector_potential` is given.
/// Defaults: flat metric, zero potential, (l, σ) = (1, 1), bump of radius 1
/// and order 4 at the origin.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub d: usize,
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub field: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub vector_potential: Option<Vec<ScalarField>>,
    #[serde(default)]
    pub potential: Option<ScalarField>,
    pub mu: f64,
    pub h: f64,
    #[serde(default)]
    pub smoothness: Option<Smoothness>,
    #[serde(default)]
    pub cutoff: Option<Cutoff>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub mu_list: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_rule: Option<MuRule>,
    #[serde(default)]
    pub h_list: Vec<f64>,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub with_correction: bool,
    #[serde(default)]
    pub window: Option<TauWindow>,
    #[serde(default)]
    pub theorem: Option<String>,
    #[serde(default)]
    pub correction: Option<CorrectionConfig>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    #[serde(default)]
    pub json_path: Option<PathBuf>,
    /// Keep per-row wall-clock times in JSON reports (they break byte-identical reruns).
    #[serde(default)]
    pub timing: bool,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("--config: cannot read {}: {e}", path.display())))?;
        let mut cfg: Config = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Fills defaults in place so `--dry-run` can print them.
    fn resolve(&mut self) -> Result<(), CliError> {
        let p = &mut self.problem;
        let d = p.d;
        if d == 0 {
            return Err(CliError::Config("problem.d: must be at least 1".into()));
        }
        match (&p.field, &p.vector_potential) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("problem.field: give either field or vector_potential, not both".into()))
            }
            (None, None) => return Err(CliError::Config("problem.field: missing field or vector_potential".into())),
            _ => {}
        }
        p.metric.get_or_insert_with(|| {
            Metric::Constant((0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect())
        });
        p.potential.get_or_insert(ScalarField::Constant(0.0));
        p.smoothness.get_or_insert_with(Smoothness::default);
        p.cutoff.get_or_insert_with(|| Cutoff::Bump { center: vec![0.0; d], radius: 1.0, order: 4 });
        Ok(())
    }

    pub fn spec(&self) -> Result<OperatorSpec, CliError> {
        let p = &self.problem;
        let field = match (&p.field, &p.vector_potential) {
            (Some(f), None) => MagneticField::Constant(f.clone()),
            (None, Some(v)) => MagneticField::VectorPotential(v.clone()),
            _ => unreachable!("checked in resolve"),
        };
        let spec = OperatorSpec {
            d: p.d,
            metric: p.metric.clone().expect("resolved"),
            field,
            potential: p.potential.clone().expect("resolved"),
            mu: p.mu,
            h: p.h,
            smoothness: p.smoothness.expect("resolved"),
            cutoff: p.cutoff.clone().expect("resolved"),
        };
        spec.validate().map_err(|e| CliError::Config(format!("problem: {e}")))?;
        Ok(spec)
    }

    pub fn oracle(&self, seed: Option<u64>) -> Result<OracleConfig, CliError> {
        let mut o = self.oracle.clone().ok_or_else(|| CliError::Config("oracle: section missing".into()))?;
        if let (OracleConfig::Lattice { solver, .. }, Some(s)) = (&mut o, seed) {
            solver.seed = s;
        }
        Ok(o)
    }

    pub fn sweep_section(&self) -> Result<&SweepSection, CliError> {
        self.sweep.as_ref().ok_or_else(|| CliError::Config("sweep: section missing".into()))
    }

    pub fn measure(&self, seed: Option<u64>) -> Result<MeasureConfig, CliError> {
        let (window, correction, theorem) = match &self.sweep {
            Some(s) => (s.window, s.correction.clone(), s.theorem.clone()),
            None => (None, None, None),
        };
        Ok(MeasureConfig { oracle: self.oracle(seed)?, window, correction, theorem })
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, CliError> {
        let s = self.sweep_section()?;
        Ok(SweepConfig {
            mu_list: s.mu_list.clone(),
            mu_rule: s.mu_rule,
            h_list: s.h_list.clone(),
            tau: s.tau,
            with_correction: s.with_correction,
        })
    }

    /// `--tau`, else `sweep.tau`.
    pub fn tau(&self, flag: Option<f64>) -> Result<f64, CliError> {
        flag.or_else(|| self.sweep.as_ref().map(|s| s.tau))
            .ok_or_else(|| CliError::Config("tau: pass --tau or set sweep.tau".into()))
    }
}
