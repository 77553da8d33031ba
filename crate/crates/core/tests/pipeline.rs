use magweyl::asymptotics_lab::{sweep, Constants, MeasureConfig, MuRule, OracleConfig, SweepConfig, TauWindow};
use magweyl::field::{Poly, ScalarField};
use magweyl::field_geometry::{Cutoff, MagneticField, Metric, OperatorSpec, Smoothness};
use magweyl::spectral_oracle::SeparableConfig;

fn base() -> OperatorSpec {
    OperatorSpec {
        d: 3,
        metric: Metric::Constant(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]),
        field: MagneticField::Constant(vec![vec![0.0, 1.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0; 3]]),
        potential: ScalarField::Polynomial(Poly::constant(-1.0).term(1.0, &[0, 0, 2])),
        mu: 1.0,
        h: 0.1,
        smoothness: Smoothness::default(),
        cutoff: Cutoff::Bump { center: vec![0.0; 3], radius: 0.5, order: 4 },
    }
}

#[test]
fn separable_sweep_end_to_end() {
    let cfg = SweepConfig {
        mu_list: None,
        mu_rule: Some(MuRule::Power { c: 1.0, exponent: -1.0 / 3.0 }),
        h_list: vec![0.125, 0.0625, 0.03125, 0.015625],
        tau: 0.0,
        with_correction: false,
    };
    let measure = MeasureConfig {
        oracle: OracleConfig::Separable(SeparableConfig::new(-2.5, 2.5)),
        window: Some(TauWindow { half_width: 0.1, points: 41 }),
        correction: None,
        theorem: Some("weak".into()),
    };
    let mut k = Constants::default();
    k.c.insert("weak".into(), 5.0);
    let report = sweep(&base(), &cfg, &measure, &k).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.rows.len(), 4);
    for r in &report.rows {
        assert!((r.mu - r.h.powf(-1.0 / 3.0)).abs() < 1e-12);
        assert!(r.remainder <= r.bound, "{r:?}");
        assert!((r.oracle - r.principal - r.signed_remainder).abs() < 1e-9 * r.oracle.abs().max(1.0));
    }
    // Remainder grows as h decreases, relative remainder shrinks.
    let fit = report.fits.iter().find(|f| f.y_key == "remainder").unwrap();
    assert!(fit.exponent < 0.0);
    let rel = report.fits.iter().find(|f| f.y_key == "relative_remainder").unwrap();
    assert!(rel.exponent > 0.0);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 5);
}
