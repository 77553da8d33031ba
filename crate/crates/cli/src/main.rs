mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use magweyl::asymptotics_lab::{
    classify_regime, measure_remainder, sweep, thresholds, MeasureConfig, OracleConfig,
};
use magweyl::field::{GriddedField, ScalarField, UniformGrid};
use magweyl::field_geometry::{
    canonical_reduce_constant, compute_eigenstructure, detect_resonances, eigenstructure_at, OperatorSpec,
    DEFAULT_EPS0, DEFAULT_EPS_GROUP,
};
use magweyl::landau_counting::{n0_count, weyl_volume, CountingQuery};
use magweyl::microhyperbolicity::{check_constant_field, check_constant_multiplicity, check_ultrastrong, LandauData};
use magweyl::oscillator_algebra::{build_resonant_model, correction_term};
use magweyl::spectral_oracle::{
    assemble_mixed, cache_dir, eigensolve, read_spectrum, spectrum_path, write_spectrum, SolverConfig, Target,
};
use magweyl::weyl_law::{weyl_integral, WeylQuadConfig};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use config::Config;

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2; the message starts with the offending key.
    Config(String),
    /// Exit code 3.
    Numerical { stage: &'static str, message: String },
}

impl CliError {
    fn numerical(stage: &'static str) -> impl FnOnce(magweyl::Error) -> CliError {
        move |e| CliError::Numerical { stage, message: e.to_string() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "magweyl", version, about = "Magnetic Weyl asymptotics and spectral oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spectral parameter τ (overrides sweep.tau).
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the rayon pool.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the eigensolver seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved config, defaults filled in, and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MhVariant {
    /// Constant field: |∇V| ≥ ε (with --landau, distance to Landau levels too).
    ConstantField,
    /// W = V + μh Σf_j: |W| + |∇W| ≥ ε.
    Ultrastrong,
    /// Intensities f_j(x) sampled from the field on the grid.
    ConstantMultiplicity,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest lattice eigenvalues (or all below --tau).
    Eig {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        lowest: usize,
    },
    /// Canonical form, intensities and resonances of a constant field.
    Canon {
        #[command(flatten)]
        common: Common,
    },
    /// Principal Weyl term ∫𝓔^MW(x, τ)ψ(x)dx.
    Weyl {
        #[command(flatten)]
        common: Common,
    },
    /// Landau lattice count n₀ and its Weyl volume at the reference point.
    Count {
        #[command(flatten)]
        common: Common,
    },
    /// Grid check of the microhyperbolicity condition over the cutoff support.
    MhCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        variant: Option<MhVariant>,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Grid points per axis.
        #[arg(long, default_value_t = 21)]
        grid_n: usize,
        /// Include Landau levels in the constant-field check.
        #[arg(long)]
        landau: bool,
    },
    /// One remainder measurement: oracle, principal term and bound.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Correction term for the resonant model in sweep.correction.
    Correction {
        #[command(flatten)]
        common: Common,
    },
    /// (μ, h) sweep with power-law fits.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Regime thresholds for h, and the regime label when --mu is given.
    Regimes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 1)]
        q: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical { stage, message }) => {
            eprintln!("numerical failure in {stage}: {message}");
            ExitCode::from(3)
        }
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Eig { common, .. }
        | Command::Canon { common }
        | Command::Weyl { common }
        | Command::Count { common }
        | Command::MhCheck { common, .. }
        | Command::Oracle { common }
        | Command::Correction { common }
        | Command::Sweep { common }
        | Command::Regimes { common, .. } => common,
    }
}

fn run(cmd: Command) -> Result<()> {
    let c = common(&cmd).clone();
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs: must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }

    if let Command::Regimes { h, mu, q, .. } = cmd {
        return regimes(&c, h, mu, q);
    }

    let path = c.config.as_deref().ok_or_else(|| CliError::Config("--config: required for this command".into()))?;
    let cfg = Config::load(path)?;
    if c.dry_run {
        let mut resolved = cfg.clone();
        if let (Some(OracleConfig::Lattice { solver, .. }), Some(s)) = (&mut resolved.oracle, c.seed) {
            solver.seed = s;
        }
        return emit(&c, &cfg, to_value(&resolved));
    }
    let spec = cfg.spec()?;

    let value = match cmd {
        Command::Eig { lowest, .. } => eig(&c, &cfg, &spec, lowest)?,
        Command::Canon { .. } => canon(&spec)?,
        Command::Weyl { .. } => {
            let tau = cfg.tau(c.tau)?;
            let r = weyl_integral(&spec, tau, &WeylQuadConfig::default()).map_err(CliError::numerical("weyl"))?;
            json!({"tau": tau, "value": r.value, "error": r.error, "evaluations": r.evaluations})
        }
        Command::Count { .. } => count(&c, &cfg, &spec)?,
        Command::MhCheck { variant, eps, grid_n, landau, .. } => mh_check(&spec, variant, eps, grid_n, landau)?,
        Command::Oracle { .. } => {
            let tau = cfg.tau(c.tau)?;
            let with_correction = cfg.sweep.as_ref().is_some_and(|s| s.with_correction);
            let m = cfg.measure(c.seed)?;
            let row = measure_remainder(&spec, tau, with_correction, &m, &cfg.constants)
                .map_err(CliError::numerical("oracle"))?;
            to_value(&row)
        }
        Command::Correction { .. } => correction(&cfg, &spec)?,
        Command::Sweep { .. } => {
            let sc = cfg.sweep_config()?;
            let mut sc = sc;
            if let Some(t) = c.tau {
                sc.tau = t;
            }
            let m: MeasureConfig = cfg.measure(c.seed)?;
            let report = sweep(&spec, &sc, &m, &cfg.constants).map_err(CliError::numerical("sweep"))?;
            if let Some(p) = &cfg.output.csv_path {
                write_file(p, &report.to_csv())?;
            }
            to_value(&report)
        }
        Command::Regimes { .. } => unreachable!("handled above"),
    };
    emit(&c, &cfg, value)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("output: cannot write {}: {e}", path.display())))
}

fn emit(c: &Common, cfg: &Config, mut v: Value) -> Result<()> {
    if !cfg.output.timing {
        output::strip_timing(&mut v);
    }
    let text = output::to_json(&v);
    if let Some(p) = &cfg.output.json_path {
        write_file(p, &text)?;
    }
    match &c.out {
        Some(p) => write_file(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn regimes(c: &Common, h: f64, mu: Option<f64>, q: usize) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(CliError::Config(format!("--h: need 0 < h < 1, got {h}")));
    }
    if q == 0 {
        return Err(CliError::Config("--q: must be at least 1".into()));
    }
    let cfg = match &c.config {
        Some(p) => Some(Config::load(p)?),
        None => None,
    };
    let constants = cfg.as_ref().map(|c| c.constants.clone()).unwrap_or_default();
    if c.dry_run {
        let v = json!({"h": h, "mu": mu, "q": q, "constants": to_value(&constants)});
        return print_plain(c, v);
    }
    let v = match mu {
        Some(mu) => to_value(&classify_regime(mu, h, q, &constants)),
        None => {
            // The length scales depend on μ; only the μ-thresholds are reported.
            let t = thresholds(1.0, h, q, &constants);
            json!({
                "h": h, "q": q,
                "mu1": t.mu1, "mu2": t.mu2, "mu3": t.mu3, "mu_star": t.mu_star,
                "superstrong": t.superstrong, "ultrastrong": t.ultrastrong,
                "constants": to_value(&constants),
            })
        }
    };
    match cfg {
        Some(cfg) => emit(c, &cfg, v),
        None => print_plain(c, v),
    }
}

fn print_plain(c: &Common, v: Value) -> Result<()> {
    let text = output::to_json(&v);
    match &c.out {
        Some(p) => write_file(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn eig(c: &Common, cfg: &Config, spec: &OperatorSpec, lowest: usize) -> Result<Value> {
    let oracle = cfg.oracle(c.seed)?;
    let OracleConfig::Lattice { grid, bc, solver, .. } = &oracle else {
        return Err(CliError::Config("oracle: eig needs a lattice oracle".into()));
    };
    if c.tau.is_none() && lowest == 0 {
        return Err(CliError::Config("--lowest: must be at least 1".into()));
    }
    let target = match c.tau {
        Some(t) => Target::Below(t),
        None => Target::Lowest(lowest),
    };
    let bcs = if bc.len() == 1 { vec![bc[0]; spec.d] } else { bc.clone() };
    let op = assemble_mixed(spec, grid, &bcs).map_err(CliError::numerical("assemble"))?;

    let key = {
        let text = serde_json::to_string(&json!({"problem": &cfg.problem, "oracle": &oracle, "target": target}))
            .expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    let cached = cache_dir().map(|d| spectrum_path(&d, &key)).filter(|p| p.exists());
    let eigenvalues = match cached.as_deref().map(read_spectrum) {
        Some(Ok(v)) => {
            eprintln!("eig: cache hit {key}");
            v
        }
        _ => {
            let sol = SolverConfig { vectors: false, ..solver.clone() };
            let s = eigensolve(&op, target, &sol).map_err(CliError::numerical("eigensolve"))?;
            eprintln!(
                "eig: n = {}, solver {:?}, worst residual {:.3e}, certified up to {:.6e}",
                op.len(),
                s.solver,
                s.worst_residual,
                s.certified_max
            );
            if let Some(dir) = cache_dir() {
                let stored = std::fs::create_dir_all(&dir)
                    .map_err(magweyl::Error::from)
                    .and_then(|_| write_spectrum(&spectrum_path(&dir, &key), &s.eigenvalues));
                if let Err(e) = stored {
                    eprintln!("eig: cache write skipped: {e}");
                }
            }
            s.eigenvalues
        }
    };
    Ok(json!({
        "n": op.len(),
        "target": to_value(&target),
        "count": eigenvalues.len(),
        "eigenvalues": eigenvalues,
    }))
}

fn canon(spec: &OperatorSpec) -> Result<Value> {
    let eig = compute_eigenstructure(spec, DEFAULT_EPS0, DEFAULT_EPS_GROUP).map_err(CliError::numerical("eigenstructure"))?;
    let cf = canonical_reduce_constant(spec).map_err(CliError::numerical("canonical"))?;
    let res = detect_resonances(&eig.f, DEFAULT_EPS_GROUP);
    Ok(json!({
        "eigenstructure": to_value(&eig),
        "canonical": to_value(&cf),
        "resonances": to_value(&res),
    }))
}

fn count(c: &Common, cfg: &Config, spec: &OperatorSpec) -> Result<Value> {
    let tau = cfg.tau(c.tau)?;
    let x = spec.reference_point();
    let eig = eigenstructure_at(spec, &x, DEFAULT_EPS0, DEFAULT_EPS_GROUP).map_err(CliError::numerical("eigenstructure"))?;
    let v = spec.potential_at(&x);
    let hbar = spec.mu * spec.h;
    let n0 = n0_count(&CountingQuery { f: eig.f.clone(), v, hbar, tau }).map_err(CliError::numerical("count"))?;
    let vol = weyl_volume(&eig.f, v, tau);
    Ok(json!({
        "point": x,
        "f": eig.f,
        "v": v,
        "hbar": hbar,
        "tau": tau,
        "n0": n0,
        "scaled_n0": hbar.powi(eig.r as i32) * n0 as f64,
        "weyl_volume": vol,
    }))
}

fn mh_check(spec: &OperatorSpec, variant: Option<MhVariant>, eps: f64, n: usize, landau: bool) -> Result<Value> {
    if n < 3 {
        return Err(CliError::Config("--grid-n: need at least 3 points per axis".into()));
    }
    let (lo, hi) = spec
        .cutoff
        .support_box(spec.d)
        .ok_or_else(|| CliError::Config("problem.cutoff: mh-check needs a bump cutoff to fix the grid".into()))?;
    let grid = UniformGrid::new(lo, hi, vec![n; spec.d]).map_err(CliError::numerical("grid"))?;
    let variant = variant.unwrap_or(if spec.field_is_constant() {
        MhVariant::ConstantField
    } else {
        MhVariant::ConstantMultiplicity
    });
    let x0 = spec.reference_point();
    let report = match variant {
        MhVariant::ConstantField => {
            if !spec.field_is_constant() {
                return Err(CliError::Config("problem.field: constant-field check needs a constant field".into()));
            }
            let data = if landau {
                let eig = compute_eigenstructure(spec, DEFAULT_EPS0, DEFAULT_EPS_GROUP)
                    .map_err(CliError::numerical("eigenstructure"))?;
                Some(LandauData { f: eig.f, mu_h: spec.mu * spec.h })
            } else {
                None
            };
            check_constant_field(&spec.potential, &grid, eps, data.as_ref())
        }
        MhVariant::Ultrastrong => {
            if !spec.field_is_constant() {
                return Err(CliError::Config("problem.field: ultrastrong check needs a constant field".into()));
            }
            let eig = eigenstructure_at(spec, &x0, DEFAULT_EPS0, DEFAULT_EPS_GROUP)
                .map_err(CliError::numerical("eigenstructure"))?;
            let shift = spec.mu * spec.h * eig.f.iter().sum::<f64>();
            let w = sample(&grid, |x| spec.potential_at(x) + shift)?;
            check_ultrastrong(&w, &grid, eps)
        }
        MhVariant::ConstantMultiplicity => {
            let r = eigenstructure_at(spec, &x0, DEFAULT_EPS0, DEFAULT_EPS_GROUP)
                .map_err(CliError::numerical("eigenstructure"))?
                .r;
            let mut per_axis = vec![Vec::with_capacity(grid.len()); r];
            for i in 0..grid.len() {
                let e = eigenstructure_at(spec, &grid.point(i), DEFAULT_EPS0, DEFAULT_EPS_GROUP)
                    .map_err(CliError::numerical("eigenstructure"))?;
                if e.r != r {
                    return Err(CliError::Numerical {
                        stage: "eigenstructure",
                        message: format!("rank changes from {r} to {} at {:?}", e.r, grid.point(i)),
                    });
                }
                for (j, fj) in e.f.iter().enumerate() {
                    per_axis[j].push(*fj);
                }
            }
            let f = per_axis
                .into_iter()
                .map(|vals| GriddedField::new(grid.clone(), vals).map(ScalarField::Gridded))
                .collect::<magweyl::Result<Vec<_>>>()
                .map_err(CliError::numerical("grid"))?;
            check_constant_multiplicity(&f, &spec.potential, &grid, eps)
        }
    };
    let name = match variant {
        MhVariant::ConstantField => "constant_field",
        MhVariant::Ultrastrong => "ultrastrong",
        MhVariant::ConstantMultiplicity => "constant_multiplicity",
    };
    let mut v = to_value(&report);
    if let Value::Object(m) = &mut v {
        m.insert("variant".into(), json!(name));
        m.insert("eps".into(), json!(eps));
    }
    Ok(v)
}

fn sample(grid: &UniformGrid, f: impl Fn(&[f64]) -> f64) -> Result<ScalarField> {
    GriddedField::new(grid.clone(), grid.sample(f)).map(ScalarField::Gridded).map_err(CliError::numerical("grid"))
}

fn correction(cfg: &Config, spec: &OperatorSpec) -> Result<Value> {
    let cc = cfg
        .sweep_section()?
        .correction
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep.correction: missing".into()))?;
    let model = build_resonant_model(cc.model, cc.omega, spec.mu, spec.h, cc.n_max)
        .map_err(CliError::numerical("resonant model"))?;
    let lg = spec.h.ln().abs();
    let rho = cc.rho_cut.unwrap_or_else(|| (spec.mu * spec.h * lg).sqrt());
    let l0 = cc.l0.unwrap_or(spec.mu * spec.h * lg);
    let r = correction_term(spec, &model, rho, l0).map_err(CliError::numerical("correction"))?;
    let integral = spec.cutoff.integral(spec.d);
    let mut v = to_value(&r);
    if let Value::Object(m) = &mut v {
        m.insert("cutoff_integral".into(), json!(integral));
        m.insert("weighted".into(), json!(r.stieltjes * integral));
    }
    Ok(v)
}
