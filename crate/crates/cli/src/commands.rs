//! Single-stage commands. Each takes its parameters and an output path.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ffm_core::characteristics::{default_horizons, CurveConfig, CurveFamily};
use ffm_core::coupling::{failure_stats, run_replicas, CouplingConfig, CouplingTrace, FailureStats};
use ffm_core::finite_model::{mean_distribution, simulate_replicas, InitialCondition, Replica, SimConfig};
use ffm_core::kinetics::{solve, Closure, Environment, SolverConfig};
use ffm_core::limit_process::{CountStats, EmpiricalLaw, Sampler, SamplerConfig};
use ffm_core::MassDistribution;

use crate::artifact::{self, file_label, kind, read_artifact, save_env, write_artifact, Stamp};
use crate::{CliError, CliResult};

/// SHA-256 of a file's bytes, tying downstream artifacts to their inputs.
pub fn input_hash(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|source| CliError::File { path: path.display().to_string(), source })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateParams {
    pub config: SimConfig,
    pub replicas: u64,
    pub snapshots: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationData {
    pub config: SimConfig,
    pub replicas: u64,
    pub times: Vec<f64>,
    /// Replica average at each snapshot time.
    pub mean: Vec<MassDistribution>,
    pub runs: Vec<Replica>,
}

pub fn simulate(p: &SimulateParams, out: &Path, pipeline: Option<&str>) -> CliResult<SimulationData> {
    if p.replicas == 0 {
        return Err(CliError::Usage("--replicas must be positive".into()));
    }
    if p.snapshots.iter().any(|&t| t > p.config.horizon) {
        return Err(CliError::Usage(format!("snapshot times must not exceed the horizon {}", p.config.horizon)));
    }
    let runs = simulate_replicas(&p.config, p.replicas, &p.snapshots)?;
    let mean = (0..p.snapshots.len())
        .map(|i| {
            let snaps: Vec<MassDistribution> = runs.iter().map(|r| r.snapshots[i].clone()).collect();
            mean_distribution(&snaps)
        })
        .collect();
    let data =
        SimulationData { config: p.config.clone(), replicas: p.replicas, times: p.snapshots.clone(), mean, runs };
    write_artifact(out, kind::SIMULATION, Stamp::new(p, Some(p.config.seed), pipeline), &data)?;
    Ok(data)
}

/// Read an initial distribution: either a bare `MassDistribution` or an
/// `InitialCondition` holding one.
pub fn read_init(path: &Path) -> CliResult<MassDistribution> {
    let value: serde_json::Value = artifact::read_json(path)?;
    let dist = serde_json::from_value::<MassDistribution>(value.clone())
        .or_else(|_| match serde_json::from_value::<InitialCondition>(value) {
            Ok(InitialCondition::Distribution(d)) => Ok(d),
            _ => Err(()),
        })
        .map_err(|_| ffm_core::Error::SchemaMismatch(format!("{} is not a mass distribution", path.display())))?;
    dist.validate()?;
    Ok(dist)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveParams {
    pub init: MassDistribution,
    pub closure: Closure,
    pub solver: SolverConfig,
}

pub fn solve_env(p: &SolveParams, out: &Path, pipeline: Option<&str>) -> CliResult<Environment> {
    let env = solve(&p.init, &p.solver, p.closure)?;
    save_env(out, &env, Stamp::new(p, None, pipeline))?;
    Ok(env)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvesParams {
    pub env: String,
    pub env_hash: String,
    /// Explicit horizons; the default geometric family when absent.
    pub horizons: Option<Vec<f64>>,
    pub config: CurveConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvesData {
    pub env: String,
    pub config: CurveConfig,
    pub family: CurveFamily,
}

pub fn characteristics(
    env_path: &Path,
    horizons: Option<Vec<f64>>,
    config: CurveConfig,
    out: &Path,
    pipeline: Option<&str>,
) -> CliResult<CurvesData> {
    let env = artifact::load_env(env_path)?;
    let p = CurvesParams { env: file_label(env_path), env_hash: input_hash(env_path)?, horizons, config };
    let ys = match &p.horizons {
        Some(ys) => ys.clone(),
        None => default_horizons(&env, &p.config, &[]),
    };
    if ys.is_empty() {
        return Err(CliError::Usage("no horizons beyond the gelation time".into()));
    }
    let family = CurveFamily::build(&env, &ys, &p.config)?;
    let data = CurvesData { env: p.env.clone(), config: p.config.clone(), family };
    write_artifact(out, kind::CURVES, Stamp::new(&p, None, pipeline), &data)?;
    Ok(data)
}

pub fn load_curves(path: &Path) -> CliResult<CurveFamily> {
    Ok(read_artifact::<CurvesData>(path, kind::CURVES)?.data.family)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleParams {
    pub env: String,
    pub env_hash: String,
    pub curves: String,
    pub curves_hash: String,
    pub times: Vec<f64>,
    pub n_paths: u64,
    pub horizon: f64,
    pub config: SamplerConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawData {
    pub env: String,
    pub curves: String,
    pub n_paths: u64,
    pub config: SamplerConfig,
    pub laws: Vec<EmpiricalLaw>,
    /// Explosions on `[0, horizon]` against the burned mass.
    pub counts: CountStats,
}

pub fn sample_limit(
    env_path: &Path,
    curves_path: &Path,
    times: Vec<f64>,
    n_paths: u64,
    horizon: Option<f64>,
    config: SamplerConfig,
    out: &Path,
    pipeline: Option<&str>,
) -> CliResult<LawData> {
    if times.is_empty() || n_paths == 0 {
        return Err(CliError::Usage("sample-limit needs --t and a positive --n-paths".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage("--t must be strictly increasing".into()));
    }
    config.validate()?;
    let env = artifact::load_env(env_path)?;
    let family = load_curves(curves_path)?;
    let horizon = horizon.unwrap_or(*times.last().unwrap());
    let p = SampleParams {
        env: file_label(env_path),
        env_hash: input_hash(env_path)?,
        curves: file_label(curves_path),
        curves_hash: input_hash(curves_path)?,
        times,
        n_paths,
        horizon,
        config,
    };
    let sampler = Sampler::new(&env, &family, p.config.threshold);
    let sums = sampler.summaries(&p.times, p.horizon, n_paths, p.config.seed, p.config.first_stream)?;
    let laws = p
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| EmpiricalLaw::from_states(t, sums.iter().map(|s| s.states[i]), p.config.max_bucket))
        .collect();
    let counts = CountStats::from_summaries(&env, p.horizon, &sums);
    let data =
        LawData { env: p.env.clone(), curves: p.curves.clone(), n_paths, config: p.config.clone(), laws, counts };
    write_artifact(out, kind::LAW, Stamp::new(&p, Some(p.config.seed), pipeline), &data)?;
    Ok(data)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupleParams {
    pub env: String,
    pub env_hash: String,
    pub curves: String,
    pub curves_hash: String,
    pub config: CouplingConfig,
    pub eps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingData {
    pub env: String,
    pub curves: String,
    pub config: CouplingConfig,
    /// Present when there are enough replicas to aggregate.
    pub stats: Option<FailureStats>,
    pub traces: Vec<CouplingTrace>,
}

pub fn couple(
    env_path: &Path,
    curves_path: &Path,
    config: CouplingConfig,
    eps: f64,
    out: &Path,
    pipeline: Option<&str>,
) -> CliResult<CouplingData> {
    let env = artifact::load_env(env_path)?;
    let family = load_curves(curves_path)?;
    let p = CoupleParams {
        env: file_label(env_path),
        env_hash: input_hash(env_path)?,
        curves: file_label(curves_path),
        curves_hash: input_hash(curves_path)?,
        config,
        eps,
    };
    let traces = run_replicas(&env, &family, &p.config)?;
    let stats = if traces.len() >= 30 { Some(failure_stats(&p.config, &traces, eps)?) } else { None };
    let data = CouplingData { env: p.env.clone(), curves: p.curves.clone(), config: p.config.clone(), stats, traces };
    write_artifact(out, kind::COUPLING, Stamp::new(&p, Some(p.config.seed), pipeline), &data)?;
    Ok(data)
}
