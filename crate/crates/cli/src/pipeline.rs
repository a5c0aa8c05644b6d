//! Config-driven run of all stages: solve, characteristics, simulate,
//! sample-limit, couple, report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ffm_core::characteristics::CurveConfig;
use ffm_core::coupling::CouplingConfig;
use ffm_core::finite_model::{InitialCondition, SimConfig};
use ffm_core::kinetics::{Closure, SolverConfig};
use ffm_core::limit_process::SamplerConfig;
use ffm_core::MassDistribution;

use crate::artifact::{config_hash, read_json};
use crate::commands::{self, SimulateParams, SolveParams};
use crate::report::{run_report, ReportConfig, ReportInputs};
use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Initial mass distribution; monodisperse when absent.
    pub init: Option<MassDistribution>,
    pub n: Vec<usize>,
    /// Fire rate `n^{-lambda_exponent}` unless `lambda` is set.
    pub lambda_exponent: f64,
    pub lambda: Option<f64>,
    pub dagger: bool,
    pub horizon: f64,
    pub snapshots: Vec<f64>,
    pub replicas: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            init: None,
            n: vec![10_000, 100_000],
            lambda_exponent: 0.3,
            lambda: None,
            dagger: false,
            horizon: 2.0,
            snapshots: vec![0.25, 0.5, 0.75, 1.5, 2.0],
            replicas: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub times: Vec<f64>,
    pub n_paths: u64,
    /// End of the explosion count window; the last of `times` when absent.
    pub horizon: Option<f64>,
    pub threshold: u64,
    pub max_bucket: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            times: vec![0.5, 2.0],
            n_paths: 100_000,
            horizon: Some(3.0),
            threshold: 100_000,
            max_bucket: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub n: Vec<usize>,
    /// Region thresholds `K`.
    pub k: Vec<u64>,
    pub lambda_exponent: f64,
    pub horizon: f64,
    pub replicas: u64,
    pub threshold: u64,
    pub observe: Vec<f64>,
    pub eps: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        CouplingSection {
            n: vec![1_000, 10_000, 100_000],
            k: vec![16, 64, 256],
            lambda_exponent: 0.3,
            horizon: 2.0,
            replicas: 1000,
            threshold: 100_000,
            observe: vec![0.5, 2.0],
            eps: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub solver: SolverConfig,
    pub curves: CurveConfig,
    pub sampler: SamplerSection,
    pub coupling: CouplingSection,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            model: ModelSection::default(),
            solver: SolverConfig::new(4096, 3.0),
            curves: CurveConfig::default(),
            sampler: SamplerSection::default(),
            coupling: CouplingSection::default(),
            report: ReportConfig::default(),
        }
    }
}

pub const STAGES: [&str; 6] = ["solve", "characteristics", "simulate", "sample-limit", "couple", "report"];

/// One planned stage with its outputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub stage: &'static str,
    pub outputs: Vec<PathBuf>,
    pub detail: String,
}

pub fn load_config(path: &Path) -> CliResult<PipelineConfig> {
    read_json(path).map_err(|e| match e {
        CliError::Parse { path, source } => {
            CliError::Core(ffm_core::Error::SchemaMismatch(format!("{path}: {source}")))
        }
        other => other,
    })
}

fn fire_rate(n: usize, exponent: f64) -> f64 {
    (n as f64).powf(-exponent)
}

impl PipelineConfig {
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    fn sim_seed(&self) -> u64 {
        self.seed
    }
    fn sampler_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
    fn coupling_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    fn init(&self) -> MassDistribution {
        self.model.init.clone().unwrap_or_else(MassDistribution::monodisperse)
    }

    pub fn plan(&self, out: &Path) -> Vec<Step> {
        let m = &self.model;
        let c = &self.coupling;
        let sims = m.n.iter().map(|n| out.join(format!("sim_n{n}.json"))).collect();
        let couplings =
            c.k.iter().flat_map(|k| c.n.iter().map(move |n| out.join(format!("coupling_k{k}_n{n}.json")))).collect();
        vec![
            Step {
                stage: "solve",
                outputs: vec![out.join("env.json"), out.join("env.bin")],
                detail: format!("K = {}, T = {}", self.solver.k_max, self.solver.horizon),
            },
            Step {
                stage: "characteristics",
                outputs: vec![out.join("curves.json")],
                detail: format!("{} geometric horizons", self.curves.family_size),
            },
            Step {
                stage: "simulate",
                outputs: sims,
                detail: format!("n in {:?}, {} replicas, snapshots {:?}", m.n, m.replicas, m.snapshots),
            },
            Step {
                stage: "sample-limit",
                outputs: vec![out.join("law.json")],
                detail: format!("{} paths at t in {:?}", self.sampler.n_paths, self.sampler.times),
            },
            Step {
                stage: "couple",
                outputs: couplings,
                detail: format!("n in {:?}, K in {:?}, {} replicas, T = {}", c.n, c.k, c.replicas, c.horizon),
            },
            Step { stage: "report", outputs: vec![out.join("report")], detail: "tables and checks".into() },
        ]
    }

    pub fn validate(&self) -> CliResult<()> {
        self.solver.validate()?;
        self.curves.validate()?;
        self.init().validate()?;
        let m = &self.model;
        if m.n.is_empty() || m.replicas == 0 || m.snapshots.iter().any(|&t| t > m.horizon) {
            return Err(CliError::Usage("model: need n values, replicas > 0 and snapshots within the horizon".into()));
        }
        let s = &self.sampler;
        if s.times.is_empty() || s.n_paths == 0 {
            return Err(CliError::Usage("sampler: need times and n_paths > 0".into()));
        }
        if self.coupling.k.is_empty() || self.coupling.n.is_empty() {
            return Err(CliError::Usage("coupling: need n and k values".into()));
        }
        Ok(())
    }
}

/// Run the chosen stages (all when `only` is empty) into `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path, only: &[String]) -> CliResult<()> {
    cfg.validate()?;
    for s in only {
        if !STAGES.contains(&s.as_str()) {
            return Err(CliError::Usage(format!("unknown stage {s:?}; stages are {STAGES:?}")));
        }
    }
    let wanted = |s: &str| only.is_empty() || only.iter().any(|x| x == s);
    let env_path = out.join("env.json");
    let curves_path = out.join("curves.json");
    let law_path = out.join("law.json");
    let plan = cfg.plan(out);
    let hash = cfg.hash();
    let ph = Some(hash.as_str());

    if wanted("solve") {
        let p = SolveParams { init: cfg.init(), closure: Closure::CriticalFire, solver: cfg.solver.clone() };
        commands::solve_env(&p, &env_path, ph).map_err(|e| e.in_stage("solve"))?;
    }
    if wanted("characteristics") {
        commands::characteristics(&env_path, None, cfg.curves.clone(), &curves_path, ph)
            .map_err(|e| e.in_stage("characteristics"))?;
    }
    if wanted("simulate") {
        let m = &cfg.model;
        for (&n, path) in m.n.iter().zip(&plan[2].outputs) {
            let lambda = m.lambda.unwrap_or_else(|| fire_rate(n, m.lambda_exponent));
            let config = SimConfig {
                n,
                lambda,
                dagger: m.dagger,
                horizon: m.horizon,
                init: InitialCondition::Distribution(cfg.init()),
                seed: cfg.sim_seed(),
            };
            let p = SimulateParams { config, replicas: m.replicas, snapshots: m.snapshots.clone() };
            commands::simulate(&p, path, ph).map_err(|e| e.in_stage("simulate"))?;
        }
    }
    if wanted("sample-limit") {
        let s = &cfg.sampler;
        let sc = SamplerConfig {
            threshold: s.threshold,
            seed: cfg.sampler_seed(),
            first_stream: 0,
            max_bucket: s.max_bucket,
        };
        commands::sample_limit(&env_path, &curves_path, s.times.clone(), s.n_paths, s.horizon, sc, &law_path, ph)
            .map_err(|e| e.in_stage("sample-limit"))?;
    }
    if wanted("couple") {
        let c = &cfg.coupling;
        let mut paths = plan[4].outputs.iter();
        for &k in &c.k {
            for (i, &n) in c.n.iter().enumerate() {
                let config = CouplingConfig {
                    n,
                    lambda: fire_rate(n, c.lambda_exponent),
                    k,
                    horizon: c.horizon,
                    seed: cfg.coupling_seed(),
                    replicas: c.replicas,
                    first_stream: i as u64 * c.replicas,
                    threshold: c.threshold,
                    observe: c.observe.clone(),
                    keep_trace: false,
                };
                let path = paths.next().expect("one output per run");
                commands::couple(&env_path, &curves_path, config, c.eps, path, ph).map_err(|e| e.in_stage("couple"))?;
            }
        }
    }
    if wanted("report") {
        let inputs = ReportInputs {
            env: Some(env_path.clone()),
            compare_env: Vec::new(),
            simulations: plan[2].outputs.clone(),
            laws: vec![law_path.clone()],
            couplings: plan[4].outputs.clone(),
        };
        run_report(&inputs, &cfg.report, &out.join("report"), ph).map_err(|e| e.in_stage("report"))?;
    }
    Ok(())
}

/// Human-readable plan for `--dry-run`.
pub fn describe_plan(cfg: &PipelineConfig, out: &Path) -> String {
    let mut s = format!("config hash {}\nseed {}\noutput directory {}\n", cfg.hash(), cfg.seed, out.display());
    for (i, step) in cfg.plan(out).iter().enumerate() {
        s.push_str(&format!("{}. {}: {}\n", i + 1, step.stage, step.detail));
        for o in &step.outputs {
            s.push_str(&format!("     -> {}\n", o.display()));
        }
    }
    s
}
