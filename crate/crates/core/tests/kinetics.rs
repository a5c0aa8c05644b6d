use ffm_core::kinetics::*;
use ffm_core::MassDistribution;
use statrs::function::gamma::ln_gamma;

/// `k^{k-1} t^{k-1} e^{-kt} / k!` through the log-gamma function.
fn borel_oracle(k: u64, t: f64) -> f64 {
    let kf = k as f64;
    ((kf - 1.0) * (kf * t).ln() - kf * t - ln_gamma(kf + 1.0)).exp()
}

fn mono() -> MassDistribution {
    MassDistribution::monodisperse()
}

#[test]
fn closed_form_matches_log_gamma_oracle() {
    for k in [1u64, 2, 7, 50, 51, 200, 3000] {
        for t in [0.1, 0.5, 0.99, 1.0, 1.01, 2.0] {
            let a = borel_vk(k, t);
            let b = borel_oracle(k, t);
            // the oracle loses about |log v| ulps in the exponential
            assert!((a - b).abs() <= 1e-10 * b, "k={k} t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn coagulation_matches_closed_form() {
    let cfg = SolverConfig { step_pre: 1e-3, ..SolverConfig::new(50, 1.0) };
    let env = solve_smoluchowski(&mono(), &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for (i, &t) in env.times.iter().enumerate() {
        for k in 1..=50 {
            worst = worst.max((env.row(i)[k - 1] - borel_oracle(k as u64, t)).abs());
        }
    }
    assert!(worst <= 1e-8, "max error {worst:e}");
}

#[test]
fn truncation_does_not_feed_back_before_gelation() {
    // sizes up to K only receive mass from sizes below them
    let small = solve_smoluchowski(&mono(), &SolverConfig::new(64, 0.9)).unwrap();
    let large = solve_smoluchowski(&mono(), &SolverConfig::new(256, 0.9)).unwrap();
    let mut worst: f64 = 0.0;
    for t in [0.3, 0.6, 0.9] {
        for k in 1..=64 {
            worst = worst.max((small.mass(t, k) - large.mass(t, k)).abs());
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn fft_and_direct_convolution_agree() {
    let base = SolverConfig::new(256, 1.6);
    let direct = solve_cffe(&mono(), &SolverConfig { fft_crossover: usize::MAX, ..base.clone() }).unwrap();
    let fft = solve_cffe(&mono(), &SolverConfig { fft_crossover: 2, ..base }).unwrap();
    assert!(fft.diagnostics.fft && !direct.diagnostics.fft);
    for t in [0.5, 1.0, 1.3, 1.6] {
        for k in 1..=256 {
            assert!((fft.mass(t, k) - direct.mass(t, k)).abs() < 1e-10, "t={t} k={k}");
        }
        assert!((fft.phi_at(t) - direct.phi_at(t)).abs() < 1e-8);
    }
}

#[test]
fn controlled_solution_coincides_before_gelation() {
    let cfg = SolverConfig::new(512, 0.95);
    let a = solve_cffe(&mono(), &cfg).unwrap();
    let b = solve_smoluchowski(&mono(), &cfg).unwrap();
    for t in [0.25, 0.5, 0.95] {
        for k in 1..=512 {
            assert!((a.mass(t, k) - b.mass(t, k)).abs() <= 1e-7);
        }
        assert_eq!(a.phi_at(t), 0.0);
    }
}

#[test]
fn inverse_moment_identity() {
    // d/dt Σ v_k/k = φ - 1/2
    let env = solve_cffe(&mono(), &SolverConfig::new(1024, 2.0)).unwrap();
    for t in [0.5, 1.0, 1.5, 2.0] {
        let r = burn_rate_integral_check(&env, t);
        assert!(r < 5e-3, "t={t}: {r:e}");
    }
    assert!(burn_rate_integral_check(&env, 0.5) < 1e-9);
}

#[test]
fn generating_function_properties() {
    let env = solve_cffe(&mono(), &SolverConfig::new(512, 2.0)).unwrap();
    for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
        assert!((eval_x(&env, t, 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(eval_x(&env, t, 0.0), 0.0);
        let mut prev = 0.0;
        let mut prev_slope = 0.0;
        for i in 1..=100 {
            let z = i as f64 / 100.0;
            let x = eval_x(&env, t, z);
            assert!(x >= prev, "X_t not increasing at t={t} z={z}");
            let slope = (x - prev) / 0.01;
            assert!(slope >= prev_slope - 1e-9, "X_t not convex at t={t} z={z}");
            prev = x;
            prev_slope = slope;
        }
        for w2 in [1e-12, 1e-6, 1e-2, 0.5] {
            let a = env.one_minus_x(t, w2);
            let b = 1.0 - eval_x(&env, t, 1.0 - w2);
            assert!((a - b).abs() <= 1e-15 + 1e-4 * b.abs(), "t={t} w2={w2}: {a} vs {b}");
        }
    }
    // monodisperse start: X_0(z) = z
    assert!((eval_x(&env, 0.0, 0.3) - 0.3).abs() < 1e-15);
}

#[test]
fn generating_complement_avoids_cancellation() {
    let d = MassDistribution::from_masses(vec![0.25, 0.25, 0.5]).unwrap();
    for w2 in [1e-14, 1e-8, 0.1, 0.9] {
        let z: f64 = 1.0 - w2;
        let direct = 0.25 * (1.0 - z) + 0.25 * (1.0 - z * z) + 0.5 * (1.0 - z.powi(3));
        // (1 - z^k) = w2 (1 + z + ... + z^{k-1})
        let series = w2 * (0.25 + 0.25 * (1.0 + z) + 0.5 * (1.0 + z + z * z));
        let got = d.generating_complement(w2);
        assert!((got - series).abs() <= 1e-15 * series, "w2={w2}");
        if w2 > 1e-3 {
            assert!((got - direct).abs() < 1e-14);
        }
    }
}

#[test]
fn mean_size_before_gelation() {
    let env = solve_cffe(&mono(), &SolverConfig::new(1024, 1.2)).unwrap();
    for t in [0.1, 0.5, 0.8, 0.9] {
        match mean_cluster_size(&env, t) {
            MeanSize::Finite(m) => assert!((m * (1.0 - t) - 1.0).abs() < 0.01, "t={t}: {m}"),
            MeanSize::Infinite => panic!("infinite mean at t={t}"),
        }
    }
    assert_eq!(mean_cluster_size(&env, 1.1), MeanSize::Infinite);
}

#[test]
fn save_and_load_round_trip() {
    let env = solve_cffe(&mono(), &SolverConfig::new(128, 1.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    env.save(&path).unwrap();
    assert!(sidecar_path(&path).exists());
    let back = Environment::load(&path).unwrap();
    assert_eq!(back.k_max, env.k_max);
    assert_eq!(back.times, env.times);
    assert_eq!(back.phi, env.phi);
    assert_eq!(back.t_gel, env.t_gel);
    for i in 0..env.rows() {
        assert_eq!(back.row(i), env.row(i));
    }
    for t in [0.3, 1.0, 1.37] {
        assert_eq!(back.total(t), env.total(t));
        assert_eq!(back.sample_increment(t, 0.77).unwrap(), env.sample_increment(t, 0.77).unwrap());
    }
}

#[test]
fn corrupted_sidecar_is_rejected() {
    let env = solve_cffe(&mono(), &SolverConfig::new(64, 1.2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    env.save(&path).unwrap();
    let side = sidecar_path(&path);
    let bytes = std::fs::read(&side).unwrap();
    std::fs::write(&side, &bytes[..bytes.len() / 2]).unwrap();
    assert!(Environment::load(&path).is_err());
}

#[test]
fn burn_rate_stays_near_one_half_late() {
    // diagnostic: φ settles close to 1/2 after the transient
    let env = solve_cffe(&mono(), &SolverConfig::new(1024, 6.0)).unwrap();
    let phi = env.phi_at(6.0);
    assert!((phi - 0.5).abs() < 0.05, "φ(6) = {phi}");
    let avg = average_burn_rate(&env, 6.0);
    assert!(avg > 0.4 && avg < 0.6, "average {avg}");
}

#[test]
fn long_run_average_burn_rate() {
    let env = solve_cffe(&mono(), &SolverConfig::new(512, 20.0)).unwrap();
    let avg = average_burn_rate(&env, 20.0);
    assert!((0.4..=0.6).contains(&avg), "average {avg}");
}

#[test]
fn polydisperse_gelation_time() {
    let init = MassDistribution::from_masses(vec![0.5, 0.0, 0.5]).unwrap();
    let env = solve_cffe(&init, &SolverConfig::new(512, 1.0)).unwrap();
    assert!((env.t_gel - 0.5).abs() < 1e-15);
    assert_eq!(env.phi_at(0.45), 0.0);
    assert!(env.phi_at(0.8) > 0.0);
    assert!(env.max_defect() < 5e-3);
}
