use ffm_core::characteristics::{default_horizons, CurveConfig, CurveFamily};
use ffm_core::kinetics::{solve_cffe, Environment, SolverConfig};
use ffm_core::limit_process::*;
use ffm_core::rng::with_n_workers;
use ffm_core::MassDistribution;
use std::sync::OnceLock;

fn setup() -> &'static (Environment, CurveFamily) {
    static SETUP: OnceLock<(Environment, CurveFamily)> = OnceLock::new();
    SETUP.get_or_init(|| {
        let env = solve_cffe(&MassDistribution::monodisperse(), &SolverConfig::new(1024, 2.5)).unwrap();
        let cfg = CurveConfig::default();
        let fam = CurveFamily::build(&env, &default_horizons(&env, &cfg, &[1.5, 2.5]), &cfg).unwrap();
        (env, fam)
    })
}

#[test]
fn one_time_marginals_match_the_medium() {
    let (env, fam) = setup();
    let sampler = Sampler::new(env, fam, 20_000);
    let cfg = SamplerConfig { seed: 3, ..Default::default() };
    let times = [0.25, 1.0, 1.5, 2.5];
    let laws = empirical_laws(&sampler, &times, 20_000, &cfg).unwrap();
    // Bonferroni over the four times
    let alpha = 0.01 / times.len() as f64;
    for law in &laws {
        let c = law.chi_square(20, |k| env.mass(law.t, k));
        assert!(c.p_value > alpha, "t={}: chi2={} df={} p={}", law.t, c.statistic, c.df, c.p_value);
    }
}

#[test]
fn restarted_paths_match_the_medium() {
    // started from the law at s, the state at t must follow the law at t
    let (env, fam) = setup();
    let sampler = Sampler::new(env, fam, 20_000);
    let (s, n) = (1.2, 20_000u64);
    let times = [1.6, 2.0, 2.5];
    let paths = ffm_core::rng::par_streams(5, 0, n, |_, rng| {
        use rand::Rng;
        let k = env.sample_increment(s, rng.random()).unwrap();
        sampler.sample_path_from(s, k, 2.5, rng).unwrap()
    });
    // Bonferroni over the three times
    let alpha = 0.05 / times.len() as f64;
    for t in times {
        let law = EmpiricalLaw::from_states(t, paths.iter().map(|p| p.size_at(t)), 100);
        let c = law.chi_square(20, |k| env.mass(t, k));
        assert!(c.p_value > alpha, "t={t}: chi2={} p={}", c.statistic, c.p_value);
    }
}

#[test]
fn explosion_counts_match_burned_mass() {
    let (env, fam) = setup();
    let sampler = Sampler::new(env, fam, 20_000);
    let cfg = SamplerConfig { seed: 4, ..Default::default() };
    let stats = explosion_count_stats(&sampler, 2.5, 20_000, &cfg).unwrap();
    assert_eq!(stats.before_gel, 0);
    assert!(stats.z.abs() < 4.0, "{stats:?}");
}

#[test]
fn survival_frequency_matches_curve() {
    let (env, fam) = setup();
    let sampler = Sampler::new(env, fam, 20_000);
    let cfg = SamplerConfig { seed: 6, ..Default::default() };
    let c = explosion_prob_check(&sampler, 0.0, 1.5, 20_000, &cfg).unwrap();
    assert!(c.z.abs() < 4.0, "{c:?}");
    let later = explosion_prob_check(&sampler, 1.2, 2.5, 20_000, &cfg).unwrap();
    assert!(later.z.abs() < 4.0, "{later:?}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (env, fam) = setup();
    let sampler = Sampler::new(env, fam, 5_000);
    let run = |w| with_n_workers(w, || sampler.summaries(&[0.5, 2.0], 2.5, 300, 11, 7).unwrap());
    assert_eq!(run(1), run(3));
}

#[test]
fn invalid_sampler_config() {
    assert!(SamplerConfig { threshold: 10, ..Default::default() }.validate().is_err());
    assert!(SamplerConfig { max_bucket: 0, ..Default::default() }.validate().is_err());
    let (env, fam) = setup();
    let sampler = Sampler::new(env, fam, 5_000);
    assert!(explosion_prob_check(&sampler, 0.0, 0.8, 10, &SamplerConfig::default()).is_err());
    assert!(empirical_law(&sampler, 2.6, 10, &SamplerConfig::default()).is_err());
}
