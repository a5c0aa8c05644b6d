//! Cross-validation report over simulation, law, coupling and environment artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ffm_core::kinetics::{average_burn_rate, burn_rate_integral_check, Closure, Environment};
use ffm_core::limit_process::EmpiricalLaw;

use crate::artifact::{self, file_label, kind, read_artifact, write_artifact, Stamp};
use crate::commands::{input_hash, CouplingData, LawData, SimulationData};
use crate::{CliError, CliResult};

/// Tolerances asserted by the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Bound on `sup_{l,t} |v^n_l(t) - v_l(t)|` per replica, where asserted.
    pub sup_tol: f64,
    pub z_max: f64,
    /// Family-wise level of the chi-square tests, split over the tests in each artifact.
    pub alpha: f64,
    /// Buckets tallied individually in law comparisons.
    pub buckets: usize,
    /// Buckets with simulation z-scores.
    pub sim_buckets: usize,
    pub identity_tol: f64,
    pub defect_tol: f64,
    /// Lower bound on the burn rate just after gelation.
    pub phi_jump: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            sup_tol: 0.01,
            z_max: 3.0,
            alpha: 0.01,
            buckets: 20,
            sim_buckets: 10,
            identity_tol: 5e-3,
            defect_tol: 5e-3,
            phi_jump: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReportInputs {
    /// Reference environment for all comparisons.
    pub env: Option<PathBuf>,
    /// Environments compared bucket by bucket against the reference.
    pub compare_env: Vec<PathBuf>,
    pub simulations: Vec<PathBuf>,
    pub laws: Vec<PathBuf>,
    pub couplings: Vec<PathBuf>,
}

impl ReportInputs {
    pub fn is_empty(&self) -> bool {
        self.env.is_none()
            && self.compare_env.is_empty()
            && self.simulations.is_empty()
            && self.laws.is_empty()
            && self.couplings.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimSupRow {
    pub artifact: String,
    pub seed: u64,
    pub n: usize,
    pub lambda: f64,
    pub replicas: u64,
    pub times: usize,
    /// Largest per-replica sup over sizes and snapshot times.
    pub sup_max: f64,
    pub sup_mean: f64,
    pub asserted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimZRow {
    pub artifact: String,
    pub seed: u64,
    pub n: usize,
    pub t: f64,
    pub k: usize,
    pub empirical: f64,
    pub expected: f64,
    pub sigma: f64,
    pub z: f64,
    pub asserted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawZRow {
    pub artifact: String,
    pub seed: u64,
    pub t: f64,
    pub k: usize,
    pub empirical: f64,
    pub expected: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChiRow {
    pub artifact: String,
    pub seed: u64,
    /// `law` or `coupling`.
    pub source: String,
    pub t: f64,
    pub paths: u64,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub level: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountRow {
    pub artifact: String,
    pub seed: u64,
    pub horizon: f64,
    pub paths: u64,
    pub mean: f64,
    pub std_err: f64,
    pub phi_integral: f64,
    pub z: f64,
    pub before_gel: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingRow {
    pub artifact: String,
    pub seed: u64,
    pub n: usize,
    pub k: u64,
    pub lambda: f64,
    pub horizon: f64,
    pub replicas: u64,
    pub p_fail: f64,
    pub p_fail_se: f64,
    pub eps: f64,
    pub p_sup: f64,
    pub p_sup_se: f64,
    pub sup_median: f64,
    pub sup_q90: f64,
    pub sup_q99: f64,
    /// `cause=count` pairs separated by `;`.
    pub causes: String,
    pub e6_free: bool,
    pub distance_violations: u64,
    pub cycle_violations: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhiRow {
    pub artifact: String,
    pub t: f64,
    pub phi: f64,
    /// `(1/(t - T_gel)) ∫_{T_gel}^t φ`, empty before gelation.
    pub running_average: Option<f64>,
    pub identity_residual: f64,
    pub defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhiSummary {
    pub artifact: String,
    pub closure: Closure,
    pub k_max: usize,
    pub t_gel: f64,
    pub horizon: f64,
    pub max_defect: f64,
    pub max_identity_residual: f64,
    /// Burn rate at the first grid point after gelation.
    pub phi_after_gel: Option<f64>,
    pub final_running_average: Option<f64>,
    pub asserted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvZRow {
    pub artifact: String,
    pub reference: String,
    pub t: f64,
    pub k: usize,
    pub value: f64,
    pub reference_value: f64,
    /// Larger of the two conservation defects, the numerical error scale.
    pub scale: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputRef {
    pub kind: String,
    pub artifact: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Report {
    pub config: Option<ReportConfig>,
    pub inputs: Vec<InputRef>,
    pub sim_sup: Vec<SimSupRow>,
    pub sim_z: Vec<SimZRow>,
    pub law_z: Vec<LawZRow>,
    pub chi_square: Vec<ChiRow>,
    pub counts: Vec<CountRow>,
    pub coupling: Vec<CouplingRow>,
    pub phi: Vec<PhiRow>,
    pub phi_summary: Vec<PhiSummary>,
    pub env_z: Vec<EnvZRow>,
    pub tolerance_failures: Vec<String>,
    pub invariant_failures: Vec<String>,
    pub pass: bool,
}

fn z_of(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CliError::File { path: path.display().to_string(), source })
}

fn need_env<'a>(env: &'a Option<(String, Environment)>, what: &str) -> CliResult<&'a (String, Environment)> {
    env.as_ref().ok_or_else(|| CliError::Usage(format!("{what} artifacts need a reference --env")))
}

/// Build the report, write `report.json` and the CSV tables into `out_dir`,
/// and fail if any asserted tolerance or invariant does not hold.
pub fn run_report(
    inputs: &ReportInputs,
    cfg: &ReportConfig,
    out_dir: &Path,
    pipeline: Option<&str>,
) -> CliResult<Report> {
    if inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one artifact".into()));
    }
    let mut r = Report { config: Some(cfg.clone()), ..Default::default() };
    let mut add_input = |kind: &str, p: &Path| -> CliResult<()> {
        r.inputs.push(InputRef { kind: kind.into(), artifact: file_label(p), sha256: input_hash(p)? });
        Ok(())
    };
    if let Some(p) = &inputs.env {
        add_input(kind::ENVIRONMENT, p)?;
    }
    for p in &inputs.compare_env {
        add_input(kind::ENVIRONMENT, p)?;
    }
    for p in &inputs.simulations {
        add_input(kind::SIMULATION, p)?;
    }
    for p in &inputs.laws {
        add_input(kind::LAW, p)?;
    }
    for p in &inputs.couplings {
        add_input(kind::COUPLING, p)?;
    }

    let env = match &inputs.env {
        Some(p) => Some((file_label(p), artifact::load_env(p)?)),
        None => None,
    };
    if let Some((label, e)) = &env {
        phi_diagnostics(&mut r, cfg, label, e);
    }
    for p in &inputs.compare_env {
        let (ref_label, reference) = need_env(&env, "compared environment")?;
        let other = artifact::load_env(p)?;
        phi_diagnostics(&mut r, cfg, &file_label(p), &other);
        compare_envs(&mut r, cfg, &file_label(p), &other, ref_label, reference);
    }
    for p in &inputs.simulations {
        let (_, e) = need_env(&env, "simulation")?;
        let sim = read_artifact::<SimulationData>(p, kind::SIMULATION)?;
        compare_simulation(&mut r, cfg, &file_label(p), &sim.data, e);
    }
    for p in &inputs.laws {
        let (_, e) = need_env(&env, "law")?;
        let law = read_artifact::<LawData>(p, kind::LAW)?;
        compare_law(&mut r, cfg, &file_label(p), &law.data, e);
    }
    let mut groups: BTreeMap<(u64, String), Vec<CouplingRow>> = BTreeMap::new();
    for p in &inputs.couplings {
        let (_, e) = need_env(&env, "coupling")?;
        let c = read_artifact::<CouplingData>(p, kind::COUPLING)?;
        if let Some(row) = compare_coupling(&mut r, cfg, &file_label(p), &c.data, e) {
            groups.entry((row.k, format!("{}", row.horizon))).or_default().push(row);
        }
    }
    for ((k, horizon), mut rows) in groups {
        rows.sort_by_key(|row| row.n);
        for w in rows.windows(2) {
            // a rise only counts when the 95% intervals are disjoint
            let (a, b) = (&w[0], &w[1]);
            if b.p_sup - 1.96 * b.p_sup_se > a.p_sup + 1.96 * a.p_sup_se {
                r.tolerance_failures.push(format!(
                    "K={k}, T={horizon}: P[sup d_E > {}] rises from {:.4} (n={}) to {:.4} (n={})",
                    b.eps, a.p_sup, a.n, b.p_sup, b.n
                ));
            }
        }
        r.coupling.extend(rows);
    }

    r.pass = r.tolerance_failures.is_empty() && r.invariant_failures.is_empty();
    let stamp = Stamp::new(&(cfg, &r.inputs), None, pipeline);
    write_artifact(&out_dir.join("report.json"), kind::REPORT, stamp, &r)?;
    write_csv(&out_dir.join("sim_sup.csv"), &r.sim_sup)?;
    write_csv(&out_dir.join("sim_z.csv"), &r.sim_z)?;
    write_csv(&out_dir.join("law_z.csv"), &r.law_z)?;
    write_csv(&out_dir.join("chi_square.csv"), &r.chi_square)?;
    write_csv(&out_dir.join("explosion_counts.csv"), &r.counts)?;
    write_csv(&out_dir.join("coupling.csv"), &r.coupling)?;
    write_csv(&out_dir.join("phi.csv"), &r.phi)?;
    write_csv(&out_dir.join("phi_summary.csv"), &r.phi_summary)?;
    write_csv(&out_dir.join("env_z.csv"), &r.env_z)?;
    if !r.invariant_failures.is_empty() {
        return Err(CliError::Invariant(r.invariant_failures.join("; ")));
    }
    if !r.tolerance_failures.is_empty() {
        return Err(CliError::Tolerance(r.tolerance_failures.clone()));
    }
    Ok(r)
}

fn phi_diagnostics(r: &mut Report, cfg: &ReportConfig, label: &str, env: &Environment) {
    let critical = env.closure == Closure::CriticalFire;
    let mut max_residual: f64 = 0.0;
    let mut last_avg = None;
    for (i, &t) in env.times.iter().enumerate() {
        let residual = burn_rate_integral_check(env, t);
        max_residual = max_residual.max(residual);
        let running_average = (t > env.t_gel).then(|| average_burn_rate(env, t));
        last_avg = running_average.or(last_avg);
        r.phi.push(PhiRow {
            artifact: label.into(),
            t,
            phi: env.phi[i],
            running_average,
            identity_residual: residual,
            defect: env.diagnostics.defect.get(i).copied().unwrap_or(f64::NAN),
        });
    }
    let phi_after_gel = env.times.iter().position(|&t| t > env.t_gel).map(|i| env.phi[i]);
    let max_defect = env.max_defect();
    if critical {
        if max_defect > cfg.defect_tol {
            r.tolerance_failures.push(format!("{label}: conservation defect {max_defect:e} > {:e}", cfg.defect_tol));
        }
        if max_residual > cfg.identity_tol {
            r.tolerance_failures
                .push(format!("{label}: burn-rate identity residual {max_residual:e} > {:e}", cfg.identity_tol));
        }
        if let Some(p) = phi_after_gel.filter(|&p| p <= cfg.phi_jump) {
            r.tolerance_failures.push(format!("{label}: burn rate just after gelation {p} <= {}", cfg.phi_jump));
        }
        if env.times.iter().zip(&env.phi).any(|(&t, &p)| t < env.t_gel && p != 0.0) {
            r.invariant_failures.push(format!("{label}: nonzero burn rate before gelation"));
        }
    }
    r.phi_summary.push(PhiSummary {
        artifact: label.into(),
        closure: env.closure,
        k_max: env.k_max,
        t_gel: env.t_gel,
        horizon: env.horizon(),
        max_defect,
        max_identity_residual: max_residual,
        phi_after_gel,
        final_running_average: last_avg,
        asserted: critical,
    });
}

fn compare_envs(
    r: &mut Report,
    cfg: &ReportConfig,
    label: &str,
    env: &Environment,
    ref_label: &str,
    reference: &Environment,
) {
    let scale = env.max_defect().max(reference.max_defect());
    let horizon = env.horizon().min(reference.horizon());
    let mut worst: f64 = 0.0;
    for &t in reference.times.iter().filter(|&&t| t <= horizon) {
        for k in 1..=cfg.buckets.min(env.k_max).min(reference.k_max) {
            let (a, b) = (env.mass(t, k), reference.mass(t, k));
            let z = z_of(a - b, scale);
            worst = worst.max(z.abs());
            r.env_z.push(EnvZRow {
                artifact: label.into(),
                reference: ref_label.into(),
                t,
                k,
                value: a,
                reference_value: b,
                scale,
                z,
            });
        }
    }
    if worst > cfg.z_max {
        r.tolerance_failures.push(format!("{label} vs {ref_label}: largest bucket |z| {worst:.3} > {}", cfg.z_max));
    }
}

fn compare_simulation(r: &mut Report, cfg: &ReportConfig, label: &str, sim: &SimulationData, env: &Environment) {
    let (n, seed, lambda) = (sim.config.n, sim.config.seed, sim.config.lambda);
    let usable: Vec<usize> = (0..sim.times.len()).filter(|&i| sim.times[i] <= env.horizon()).collect();
    // the limit is known exactly only without fires and before gelation
    let exact = |t: f64| lambda == 0.0 && t < env.t_gel;
    let mut sups = Vec::new();
    for run in &sim.runs {
        let mut sup: f64 = 0.0;
        for &i in &usable {
            let (t, snap) = (sim.times[i], &run.snapshots[i]);
            for l in 1..=snap.masses.len().max(cfg.buckets) {
                sup = sup.max((snap.get(l) - env.mass(t, l)).abs());
            }
        }
        sups.push(sup);
    }
    let sup_max = sups.iter().copied().fold(0.0, f64::max);
    let sup_mean = sups.iter().sum::<f64>() / sups.len().max(1) as f64;
    let asserted = !usable.is_empty() && usable.iter().all(|&i| exact(sim.times[i]));
    if asserted && sup_max > cfg.sup_tol {
        r.tolerance_failures.push(format!("{label}: sup |v^n - v| = {sup_max:.3e} > {}", cfg.sup_tol));
    }
    r.sim_sup.push(SimSupRow {
        artifact: label.into(),
        seed,
        n,
        lambda,
        replicas: sim.replicas,
        times: usable.len(),
        sup_max,
        sup_mean,
        asserted,
    });
    for &i in &usable {
        let t = sim.times[i];
        for k in 1..=cfg.sim_buckets {
            let v = env.mass(t, k);
            // about n/k clusters of size k, each present with probability v_k
            let sigma = (k as f64 * v * (1.0 - v) / (n as f64 * sim.replicas as f64)).sqrt();
            let emp = sim.mean[i].get(k);
            let z = z_of(emp - v, sigma);
            let asserted = exact(t);
            if asserted && z.abs() > cfg.z_max {
                r.tolerance_failures.push(format!("{label}: t={t} k={k} z = {z:.3}"));
            }
            r.sim_z.push(SimZRow {
                artifact: label.into(),
                seed,
                n,
                t,
                k,
                empirical: emp,
                expected: v,
                sigma,
                z,
                asserted,
            });
        }
    }
}

fn chi_row(
    r: &mut Report,
    cfg: &ReportConfig,
    label: &str,
    seed: u64,
    source: &str,
    law: &EmpiricalLaw,
    env: &Environment,
    tests: usize,
) {
    let c = law.chi_square(cfg.buckets, |k| env.mass(law.t, k));
    let level = cfg.alpha / tests.max(1) as f64;
    if !(c.p_value > level) {
        r.tolerance_failures.push(format!(
            "{label}: {source} law at t={} rejected, chi2 {:.2} on {} df, p = {:.2e} <= {level:.2e}",
            law.t, c.statistic, c.df, c.p_value
        ));
    }
    r.chi_square.push(ChiRow {
        artifact: label.into(),
        seed,
        source: source.into(),
        t: law.t,
        paths: law.paths,
        statistic: c.statistic,
        df: c.df,
        p_value: c.p_value,
        level,
    });
}

fn compare_law(r: &mut Report, cfg: &ReportConfig, label: &str, data: &LawData, env: &Environment) {
    let seed = data.config.seed;
    for law in &data.laws {
        if law.t > env.horizon() {
            r.tolerance_failures.push(format!("{label}: t={} is beyond the reference horizon", law.t));
            continue;
        }
        for (i, z) in law.z_scores(cfg.buckets, |k| env.mass(law.t, k)).into_iter().enumerate() {
            let k = i + 1;
            r.law_z.push(LawZRow {
                artifact: label.into(),
                seed,
                t: law.t,
                k,
                empirical: law.fraction(k),
                expected: env.mass(law.t, k),
                z,
            });
        }
        chi_row(r, cfg, label, seed, "law", law, env, data.laws.len());
    }
    let c = &data.counts;
    if c.before_gel > 0 {
        r.invariant_failures.push(format!("{label}: {} explosions before gelation", c.before_gel));
    }
    if c.horizon <= env.horizon() {
        let z = z_of(c.mean - env.phi_integral_at(c.horizon), c.std_err);
        if z.abs() > cfg.z_max {
            r.tolerance_failures.push(format!("{label}: explosion count z = {z:.3}"));
        }
        r.counts.push(CountRow {
            artifact: label.into(),
            seed,
            horizon: c.horizon,
            paths: c.paths,
            mean: c.mean,
            std_err: c.std_err,
            phi_integral: env.phi_integral_at(c.horizon),
            z,
            before_gel: c.before_gel,
        });
    }
}

fn compare_coupling(
    r: &mut Report,
    cfg: &ReportConfig,
    label: &str,
    data: &CouplingData,
    env: &Environment,
) -> Option<CouplingRow> {
    let c = &data.config;
    let distance: u64 = data.traces.iter().map(|t| t.distance_violations).sum();
    let cycle: u64 = data.traces.iter().map(|t| t.cycle_violations).sum();
    if distance + cycle > 0 {
        r.invariant_failures.push(format!("{label}: {distance} distance and {cycle} cycle violations"));
    }
    for (j, &t) in c.observe.iter().enumerate() {
        if t <= env.horizon() {
            let states = data.traces.iter().filter_map(|tr| tr.observed.get(j).map(|o| o.1));
            let law = EmpiricalLaw::from_states(t, states, cfg.buckets.max(1));
            chi_row(r, cfg, label, c.seed, "coupling", &law, env, c.observe.len());
        }
    }
    let s = data.stats.as_ref()?;
    if !s.e6_free {
        r.invariant_failures.push(format!("{label}: forbidden region reached"));
    }
    Some(CouplingRow {
        artifact: label.into(),
        seed: c.seed,
        n: c.n,
        k: c.k,
        lambda: c.lambda,
        horizon: c.horizon,
        replicas: s.replicas,
        p_fail: s.p_fail,
        p_fail_se: s.p_fail_se,
        eps: s.eps,
        p_sup: s.p_sup,
        p_sup_se: s.p_sup_se,
        sup_median: s.sup_quantiles[0],
        sup_q90: s.sup_quantiles[1],
        sup_q99: s.sup_quantiles[2],
        causes: s.causes.iter().map(|(k, v)| format!("{}={v}", cause_name(*k))).collect::<Vec<_>>().join(";"),
        e6_free: s.e6_free,
        distance_violations: s.distance_violations,
        cycle_violations: s.cycle_violations,
    })
}

fn cause_name(c: ffm_core::coupling::FailureCause) -> String {
    serde_json::to_value(c).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}
