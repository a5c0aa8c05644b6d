//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Runtime budgets quoted "on 4 workers" are scaled by `4 / workers` when
//! fewer workers are available.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use ffm_core::characteristics::{default_horizons, CurveConfig, CurveFamily};
use ffm_core::coupling::{failure_stats, paintbox_mismatch_bound_check, run_replicas, CouplingConfig, FailureStats};
use ffm_core::finite_model::{mean_distribution, simulate_replicas, SimConfig};
use ffm_core::kinetics::*;
use ffm_core::limit_process::*;
use ffm_core::rng::worker_count;
use ffm_core::MassDistribution;
use statrs::function::gamma::ln_gamma;

type Check = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Check);

/// `k^{k-1} t^{k-1} e^{-kt} / k!` through the log-gamma function.
fn borel(k: usize, t: f64) -> f64 {
    if t == 0.0 {
        return if k == 1 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    ((kf - 1.0) * (kf * t).ln() - kf * t - ln_gamma(kf + 1.0)).exp()
}

fn mono() -> MassDistribution {
    MassDistribution::monodisperse()
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

struct Shared {
    env: OnceLock<(Environment, f64)>,
    coarse: OnceLock<Environment>,
    long: OnceLock<Environment>,
    family: OnceLock<CurveFamily>,
}

static SHARED: Shared =
    Shared { env: OnceLock::new(), coarse: OnceLock::new(), long: OnceLock::new(), family: OnceLock::new() };

/// Controlled solution at K = 4096 on [0, 3], with its solve time.
fn env() -> &'static Environment {
    &SHARED
        .env
        .get_or_init(|| {
            let t0 = Instant::now();
            let env = solve_cffe(&mono(), &SolverConfig::new(4096, 3.0)).expect("K=4096 solve");
            (env, t0.elapsed().as_secs_f64())
        })
        .0
}

fn env_secs() -> f64 {
    env();
    SHARED.env.get().unwrap().1
}

fn coarse() -> &'static Environment {
    SHARED.coarse.get_or_init(|| solve_cffe(&mono(), &SolverConfig::new(2048, 3.0)).expect("K=2048 solve"))
}

fn long() -> &'static Environment {
    SHARED.long.get_or_init(|| solve_cffe(&mono(), &SolverConfig::new(1024, 8.0)).expect("T=8 solve"))
}

fn family() -> &'static CurveFamily {
    SHARED.family.get_or_init(|| {
        let cfg = CurveConfig::default();
        CurveFamily::build(env(), &default_horizons(env(), &cfg, &[1.5, 2.5]), &cfg).expect("curve family")
    })
}

fn scaled_budget(secs: f64) -> f64 {
    secs * (4.0 / worker_count() as f64).max(1.0)
}

fn c1() -> Check {
    let t0 = Instant::now();
    let cfg = SolverConfig { step_pre: 1e-3, ..SolverConfig::new(50, 1.0) };
    let env = solve_smoluchowski(&mono(), &cfg).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for (i, &t) in env.times.iter().enumerate() {
        for k in 1..=50 {
            worst = worst.max((env.row(i)[k - 1] - borel(k, t)).abs());
        }
    }
    Ok((
        worst <= 1e-8 && secs <= 5.0,
        format!("max |v_k - closed form| = {worst:.2e} (<= 1e-8), solve {secs:.2}s (<= 5s)"),
    ))
}

fn c2() -> Check {
    let t0 = Instant::now();
    let cfg = SolverConfig::new(4096, 0.95);
    let a = solve_cffe(&mono(), &cfg).map_err(e)?;
    let b = solve_smoluchowski(&mono(), &cfg).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for i in 0..a.rows() {
        for (x, y) in a.row(i).iter().zip(b.row(i)) {
            worst = worst.max((x - y).abs());
        }
    }
    let phi_zero = a.phi.iter().all(|&p| p == 0.0);
    Ok((
        worst <= 1e-7 && phi_zero && secs <= 30.0,
        format!("max bucket gap {worst:.2e} (<= 1e-7), phi = 0: {phi_zero}, both solves {secs:.1}s (<= 30s)"),
    ))
}

fn c3() -> Check {
    let (fine, coarse) = (env(), coarse());
    let (d_fine, d_coarse) = (fine.max_defect(), coarse.max_defect());
    let phi_zero = fine.times.iter().zip(&fine.phi).filter(|(t, _)| **t < 1.0).all(|(_, p)| *p == 0.0);
    let (r_fine, r_coarse) = (burn_rate_integral_check(fine, 2.0), burn_rate_integral_check(coarse, 2.0));
    let jump = fine.phi_at(fine.t_gel + 5e-3);
    let pass = d_fine <= 5e-3 && d_fine < d_coarse && phi_zero && r_fine <= 5e-3 && r_fine < r_coarse && jump > 0.1;
    Ok((
        pass,
        format!(
            "defect {d_fine:.2e} (K=4096) < {d_coarse:.2e} (K=2048); phi = 0 before 1: {phi_zero}; \
             identity residual at t=2 {r_fine:.2e} < {r_coarse:.2e}; phi(T_gel+) = {jump:.3}; solve {:.1}s",
            env_secs()
        ),
    ))
}

fn c4() -> Check {
    let env = env();
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [1.5, 2.0, 3.0] {
        let fit = fit_tail_law(env, t, 400, 2000);
        let expect = (2.0 * env.phi_at(t) / std::f64::consts::PI).sqrt();
        let rel = (fit.amplitude / expect - 1.0).abs();
        pass &= (fit.slope + 0.5).abs() <= 0.05 && rel <= 0.15;
        parts.push(format!("t={t}: slope {:.4}, amplitude off by {:.2}%", fit.slope, 100.0 * rel));
    }
    Ok((pass, parts.join("; ")))
}

fn c5() -> Check {
    let env = env();
    let mut worst: f64 = 0.0;
    for &t in env.times.iter().filter(|&&t| t <= 0.9 + 1e-12) {
        match mean_cluster_size(env, t) {
            MeanSize::Finite(m) => worst = worst.max((m * (1.0 - t) - 1.0).abs()),
            MeanSize::Infinite => return Ok((false, format!("infinite mean size at t={t}"))),
        }
    }
    Ok((worst <= 0.01, format!("max relative gap to 1/(1-t) on [0, 0.9]: {worst:.2e} (<= 1e-2)")))
}

fn c6() -> Check {
    let t0 = Instant::now();
    let (n, reps) = (100_000usize, 50u64);
    let times = [0.25, 0.5, 0.75];
    let cfg = SimConfig::monodisperse(n, 0.0, 0.75, 2024);
    let runs = simulate_replicas(&cfg, reps, &times).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut sup: f64 = 0.0;
    for r in &runs {
        for (snap, &t) in r.snapshots.iter().zip(&times) {
            for l in 1..=snap.masses.len().max(30) {
                sup = sup.max((snap.get(l) - borel(l, t)).abs());
            }
        }
    }
    let at_half: Vec<MassDistribution> = runs.iter().map(|r| r.snapshots[1].clone()).collect();
    let mean = mean_distribution(&at_half);
    let mut worst_z: f64 = 0.0;
    for k in 1..=10 {
        let v = borel(k, 0.5);
        // cluster counts of size k: about n/k trials with success probability v_k
        let sigma = (k as f64 * v * (1.0 - v) / (n as f64 * reps as f64)).sqrt();
        worst_z = worst_z.max((mean.get(k) - v).abs() / sigma);
    }
    let budget = scaled_budget(300.0);
    Ok((
        worst_z <= 3.0 && sup <= 0.01 && secs <= budget,
        format!("worst bucket |z| at t=0.5 {worst_z:.2} (<= 3); sup |v^n - v| {sup:.2e} (<= 1e-2); {secs:.1}s (<= {budget:.0}s)"),
    ))
}

fn c7() -> Check {
    let t0 = Instant::now();
    let env = env();
    let sampler = Sampler::new(env, family(), 100_000);
    let cfg = SamplerConfig { seed: 7, ..Default::default() };
    let laws = empirical_laws(&sampler, &[0.5, 2.0], 100_000, &cfg).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut pass = true;
    let mut parts = Vec::new();
    for law in &laws {
        let c = law.chi_square(20, |k| env.mass(law.t, k));
        pass &= c.p_value > 0.01;
        parts.push(format!("t={}: chi2 {:.1} on {} df, p = {:.3}", law.t, c.statistic, c.df, c.p_value));
    }
    let budget = scaled_budget(300.0);
    pass &= secs <= budget;
    parts.push(format!("{secs:.1}s (<= {budget:.0}s)"));
    Ok((pass, parts.join("; ")))
}

fn c8() -> Check {
    let env = env();
    let fam = family();
    let mut pass = true;
    let mut parts = Vec::new();
    for y in [1.5, 2.5] {
        let cfg = SamplerConfig { seed: 8, ..Default::default() };
        let base = explosion_prob_check(&Sampler::new(env, fam, 100_000), 0.0, y, 100_000, &cfg).map_err(e)?;
        let wide = explosion_prob_check(&Sampler::new(env, fam, 400_000), 0.0, y, 100_000, &cfg).map_err(e)?;
        let shift = (base.empirical - wide.empirical).abs() / base.std_err;
        pass &= base.z.abs() <= 3.0 && shift < 1.0;
        parts.push(format!(
            "y={y}: empirical {:.5} vs psi {:.5}, z = {:.2}; M -> 4M shift {shift:.2} sigma",
            base.empirical, base.predicted, base.z
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn c9() -> Check {
    let env = env();
    let cfg = SamplerConfig { seed: 9, ..Default::default() };
    let s = explosion_count_stats(&Sampler::new(env, family(), 100_000), 3.0, 100_000, &cfg).map_err(e)?;
    Ok((
        s.z.abs() <= 3.0 && s.before_gel == 0,
        format!(
            "mean {:.4} +- {:.4} vs integral of phi {:.4}, z = {:.2}; explosions before t=1: {}",
            s.mean, s.std_err, s.phi_integral, s.z, s.before_gel
        ),
    ))
}

fn c10() -> Check {
    let env = env();
    let cfg = CurveConfig::default();
    let ys: Vec<f64> = (1..=16).map(|i| env.t_gel + 2.0 * i as f64 / 16.0).collect();
    let fam = CurveFamily::build(env, &ys, &cfg).map_err(e)?;
    let residual = fam.curves.iter().map(|c| c.residual_stats.max_scaled).fold(0.0, f64::max);
    let mut drift: f64 = 0.0;
    for c in &fam.curves {
        let x0 = env.generating(0.0, c.psi_at(0.0));
        for &t in c.grid.iter().filter(|&&t| t <= env.t_gel) {
            drift = drift.max((env.generating(t, c.psi_at(t)) - x0).abs());
        }
    }
    let crossing = fam.max_crossing();
    // the bound only bites when y - t > 4, so also use a longer horizon
    let long = long();
    let long_curves = CurveFamily::build(long, &[5.0, 6.5, 8.0], &cfg).map_err(e)?;
    let (mut checked, mut excess) = (0usize, f64::NEG_INFINITY);
    for c in fam.curves.iter().chain(&long_curves.curves) {
        for (&t, &p) in c.grid.iter().zip(&c.psi) {
            let half = (c.y - t) / 2.0;
            if half > 1.0 {
                checked += 1;
                excess = excess.max(p - 1.0 / (half - 1.0));
            }
        }
    }
    let long_residual = long_curves.curves.iter().map(|c| c.residual_stats.max_scaled).fold(0.0, f64::max);
    let pass = residual <= 1e-4 && long_residual <= 1e-4 && drift <= 1e-6 && crossing < 0.0 && excess <= 0.0;
    Ok((
        pass,
        format!(
            "scaled residual {residual:.2e} / {long_residual:.2e} (<= 1e-4); pre-gel drift of X {drift:.2e} (<= 1e-6); \
             max crossing {crossing:.2e} (< 0); bound checked at {checked} points, max excess {excess:.3}"
        ),
    ))
}

fn c11() -> Check {
    let t0 = Instant::now();
    let env = env();
    let fam = family();
    let mut stats: Vec<FailureStats> = Vec::new();
    let mut pooled = [Vec::new(), Vec::new()];
    let mut violations = 0u64;
    for (i, n) in [1_000usize, 10_000, 100_000].into_iter().enumerate() {
        let cfg = CouplingConfig {
            n,
            lambda: (n as f64).powf(-0.3),
            k: 16,
            horizon: 2.0,
            seed: 11,
            replicas: 1000,
            first_stream: i as u64 * 1_000_000,
            observe: vec![0.5, 2.0],
            ..Default::default()
        };
        let traces = match run_replicas(env, fam, &cfg) {
            Ok(t) => t,
            Err(err) => return Ok((false, format!("n={n}: {err}"))),
        };
        for t in &traces {
            pooled[0].push(t.observed[0].1);
            pooled[1].push(t.observed[1].1);
        }
        let st = failure_stats(&cfg, &traces, 0.1).map_err(e)?;
        violations += st.distance_violations + st.cycle_violations;
        stats.push(st);
    }
    let mut pass = violations == 0;
    let mut parts = vec![format!("E6 never reached; invariant violations {violations}")];
    for (j, t) in [0.5, 2.0].into_iter().enumerate() {
        let law = EmpiricalLaw::from_states(t, pooled[j].iter().copied(), 100);
        let c = law.chi_square(20, |k| env.mass(t, k));
        pass &= c.p_value > 0.01;
        parts.push(format!("C~ at t={t}: chi2 {:.1} on {} df, p = {:.3}", c.statistic, c.df, c.p_value));
    }
    for w in stats.windows(2) {
        // 95% intervals must overlap if the estimate rises
        let rises = w[1].p_sup - 1.96 * w[1].p_sup_se > w[0].p_sup + 1.96 * w[0].p_sup_se;
        pass &= !rises;
    }
    parts.push(format!(
        "P[sup d_E > 0.1] = {}",
        stats.iter().map(|s| format!("{:.3}+-{:.3} (n={})", s.p_sup, s.p_sup_se, s.n)).collect::<Vec<_>>().join(", ")
    ));
    let secs = t0.elapsed().as_secs_f64();
    let budget = scaled_budget(1200.0);
    pass &= secs <= budget;
    parts.push(format!("{secs:.0}s (<= {budget:.0}s)"));
    Ok((pass, parts.join("; ")))
}

/// `v(0.5)` with the smallest `K` whose tail is at most `η`, and a copy
/// perturbed by alternating `±η/K²` on sizes up to `K`.
fn perturbed_pair(eta: f64) -> (MassDistribution, MassDistribution, usize) {
    let a: Vec<f64> = (1..=400).map(|k| borel(k, 0.5)).collect();
    let total: f64 = a.iter().sum();
    let a: Vec<f64> = a.iter().map(|x| x / total).collect();
    let mut head = 0.0;
    let k = a.iter().position(|x| {
        head += x;
        1.0 - head <= eta
    });
    let k = k.expect("tail below eta") + 1;
    let d = eta / (k * k) as f64;
    let mut b = a.clone();
    let mut shift = 0.0;
    for (i, x) in b.iter_mut().take(k).enumerate() {
        let s = if i % 2 == 0 { d } else { -d.min(*x) };
        *x += s;
        shift += s;
    }
    b[k] -= shift;
    (MassDistribution::from_masses(a).unwrap(), MassDistribution::from_masses(b).unwrap(), k)
}

fn c12() -> Check {
    let t0 = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for eta in [0.01, 0.05] {
        let (a, b, k) = perturbed_pair(eta);
        let c = paintbox_mismatch_bound_check(&a, &b, k, eta, 1_000_000, 12).map_err(e)?;
        let same = paintbox_mismatch_bound_check(&a, &a, k, eta, 1_000_000, 12).map_err(e)?;
        pass &= c.pass && same.mismatches == 0;
        parts.push(format!("eta={eta}, K={k}: rate {:.2e} <= {:.3} + 3 x {:.1e}", c.rate, c.bound, c.std_err));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs <= 60.0;
    parts.push(format!("{secs:.1}s (<= 60s)"));
    Ok((pass, parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("coagulation vs closed form", c1),
        ("controlled solution before gelation", c2),
        ("conservation and burn rate", c3),
        ("tail law", c4),
        ("mean cluster size", c5),
        ("finite graph without fires", c6),
        ("tagged law", c7),
        ("explosion probability", c8),
        ("explosion count", c9),
        ("characteristic curves", c10),
        ("coupling", c11),
        ("paintbox mismatch bound", c12),
    ];
    println!("acceptance run with {} worker(s)", worker_count());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = match std::panic::catch_unwind(f) {
            Ok(Ok(r)) => r,
            Ok(Err(err)) => (false, format!("error: {err}")),
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failed += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {:>2} {name} [{:.1}s]: {detail}", i + 1, t0.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
