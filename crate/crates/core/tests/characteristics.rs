use ffm_core::characteristics::*;
use ffm_core::kinetics::{solve_cffe, Environment, SolverConfig};
use ffm_core::{Error, MassDistribution};
use std::sync::OnceLock;

fn env() -> &'static Environment {
    static ENV: OnceLock<Environment> = OnceLock::new();
    ENV.get_or_init(|| solve_cffe(&MassDistribution::monodisperse(), &SolverConfig::new(1024, 3.0)).unwrap())
}

#[test]
fn pre_gel_segment_is_exponential_form() {
    let e = env();
    let c = solve_psi(e, 2.0, &CurveConfig::default()).unwrap();
    let w = c.psi_at(0.0);
    // monodisperse start: X_0(w) = w
    for t in [0.1, 0.4, 0.7, 0.95] {
        let expect = w * (t * (1.0 - w)).exp();
        assert!((c.psi_at(t) - expect).abs() < 1e-6, "t={t}");
    }
}

#[test]
fn generating_function_is_constant_along_pre_gel_curves() {
    let e = env();
    let cfg = CurveConfig::default();
    for y in [1.05, 1.5, 2.5] {
        let c = solve_psi(e, y, &cfg).unwrap();
        let x0 = e.generating(0.0, c.psi_at(0.0));
        for &t in c.grid.iter().filter(|&&t| t <= e.t_gel) {
            let x = e.generating(t, c.psi_at(t));
            assert!((x - x0).abs() <= 1e-6, "y={y} t={t}: {x} vs {x0}");
        }
    }
}

#[test]
fn integrated_and_closed_form_segments_agree() {
    let e = env();
    let closed = solve_psi(e, 2.0, &CurveConfig::default()).unwrap();
    let integ = solve_psi(e, 2.0, &CurveConfig { pre_gel: PreGel::Integrate, ..Default::default() }).unwrap();
    for t in [0.0, 0.3, 0.6, 0.9, 1.0, 1.5] {
        assert!((closed.psi_at(t) - integ.psi_at(t)).abs() < 1e-3, "t={t}");
    }
}

#[test]
fn curves_do_not_cross_and_respect_the_bound() {
    let e = env();
    let cfg = CurveConfig::default();
    let ys: Vec<f64> = (1..=16).map(|i| e.t_gel + 2.0 * i as f64 / 16.0).collect();
    let fam = CurveFamily::build(e, &ys, &cfg).unwrap();
    assert!(fam.max_crossing() < 0.0);
    for c in &fam.curves {
        assert!(c.residual_stats.max_scaled < 1e-4, "y={}: {:e}", c.y, c.residual_stats.max_scaled);
        for (&t, &p) in c.grid.iter().zip(&c.psi) {
            assert!((0.0..=1.0).contains(&p));
            let half = (c.y - t) / 2.0;
            if half > 1.0 {
                assert!(p <= 1.0 / (half - 1.0) + 1e-12, "y={} t={t}", c.y);
            }
        }
    }
}

#[test]
fn psi_increases_in_time_towards_one() {
    let c = solve_psi(env(), 2.5, &CurveConfig::default()).unwrap();
    for w in c.psi.windows(2) {
        assert!(w[1] >= w[0] - 1e-12);
    }
    assert_eq!(c.psi_at(2.5), 1.0);
    assert!(c.psi_at(2.4999) > 0.999);
}

#[test]
fn explosion_times_follow_survival_law() {
    let e = env();
    let cfg = CurveConfig::default();
    let fam = CurveFamily::build(e, &default_horizons(e, &cfg, &[2.0, 2.5]), &cfg).unwrap();
    for (s, k) in [(1.5, 1000u64), (0.5, 5000), (2.0, 1u64 << 20)] {
        for y in [2.0, 2.5] {
            let p = explosion_survival(fam.curve(y).unwrap(), s, k);
            if p <= 1e-6 || p >= 1.0 - 1e-6 {
                continue;
            }
            let tau = fam.explosion_time(e, s, k, p).unwrap().unwrap();
            assert!((tau - y).abs() < 5e-3, "s={s} k={k} y={y}: {tau}");
        }
    }
    // a huge cluster explodes almost at once
    let soon = fam.explosion_time(e, 2.0, 1u64 << 40, 1e-6).unwrap().unwrap();
    assert!(soon > 2.0 && soon - 2.0 < 1e-3, "{soon}");
    // a singleton near the end of the family most likely outlives it
    assert!(fam.explosion_time(e, 2.9, 1, 1e-12).unwrap().is_none());
}

#[test]
fn horizon_checks() {
    let e = env();
    assert!(matches!(solve_psi(e, 0.9, &CurveConfig::default()), Err(Error::HorizonBeforeGel { .. })));
    assert!(matches!(solve_psi(e, 3.5, &CurveConfig::default()), Err(Error::EnvTooShort { .. })));
}

#[test]
fn sparse_family_is_reported() {
    let e = env();
    let cfg = CurveConfig { max_gap: 0.2, ..Default::default() };
    let fam = CurveFamily::build(e, &[1.5, 3.0], &cfg).unwrap();
    let mut saw = false;
    for u in [0.9, 0.5, 0.1, 0.01] {
        if let Err(Error::CurveFamilyTooSparse { .. }) = fam.explosion_time(e, 1.2, 10_000, u) {
            saw = true;
        }
    }
    assert!(saw);
}

#[test]
fn curve_json_round_trip() {
    let c = solve_psi(env(), 1.7, &CurveConfig::default()).unwrap();
    let text = serde_json::to_string(&c).unwrap();
    let back: CharacteristicCurve = serde_json::from_str(&text).unwrap();
    for t in [0.0, 0.8, 1.2, 1.6] {
        assert_eq!(back.psi_at(t), c.psi_at(t));
    }
}
