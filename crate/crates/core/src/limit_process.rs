//! Monte Carlo for the limiting tagged-cluster process.
//!
//! From state `k` the process jumps at rate `k` by an increment drawn from
//! the environment at the jump time. Above the threshold `M` the remaining
//! cascade is not simulated: the explosion time is drawn from
//! `P[τ > y] = ψ_y(s)^k` and the state restarts at one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::characteristics::{solve_psi, CurveConfig, CurveFamily};
use crate::error::{Error, Result};
use crate::finite_model::{EventKind, JumpPath};
use crate::kinetics::Environment;
use crate::mass::Paintbox;
use crate::rng::{par_streams, Stream};
use crate::stats::{binomial_se, chi_square, mean_se, ChiSquare};

/// Largest representable state.
pub const STATE_CAP: u64 = i64::MAX as u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Size above which the explosion time is drawn from the survival law.
    pub threshold: u64,
    pub seed: u64,
    /// First stream id; path `i` uses stream `first_stream + i`.
    pub first_stream: u64,
    /// Buckets `1..=max_bucket` are tallied individually in laws.
    pub max_bucket: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { threshold: 100_000, seed: 0, first_stream: 0, max_bucket: 100 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold < 1000 {
            return Err(Error::InvalidConfig(format!("sampler.threshold = {} < 1000", self.threshold)));
        }
        if self.max_bucket == 0 {
            return Err(Error::InvalidConfig("sampler.max_bucket = 0".into()));
        }
        Ok(())
    }
}

/// Shared read-only inputs of the sampler.
#[derive(Clone, Copy)]
pub struct Sampler<'a> {
    pub env: &'a Environment,
    pub family: &'a CurveFamily,
    pub threshold: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(env: &'a Environment, family: &'a CurveFamily, threshold: u64) -> Self {
        Sampler { env, family, threshold }
    }

    fn check_horizon(&self, horizon: f64) -> Result<()> {
        self.env.check_covers(horizon)?;
        if horizon > self.env.t_gel && self.family.y_max() < horizon - 1e-12 {
            return Err(Error::CurveFamilyTooSparse {
                s: 0.0,
                reason: format!("family ends at {}, horizon is {horizon}", self.family.y_max()),
            });
        }
        Ok(())
    }

    /// Path on `[0, horizon]` started from a size-biased draw of the initial data.
    pub fn sample_path(&self, horizon: f64, rng: &mut Stream) -> Result<JumpPath> {
        let start = Paintbox::new(&self.env.init).sample_normalized(rng.random())?;
        self.sample_path_from(0.0, start, horizon, rng)
    }

    /// Path on `[s, horizon]` started from state `k` at time `s`.
    pub fn sample_path_from(&self, s: f64, k: u64, horizon: f64, rng: &mut Stream) -> Result<JumpPath> {
        self.check_horizon(horizon)?;
        let mut path = JumpPath::new(k);
        let (mut t, mut k) = (s, k);
        loop {
            if k > self.threshold {
                let u = 1.0 - rng.random::<f64>();
                match self.family.explosion_time(self.env, t, k, u)? {
                    Some(tau) if tau <= horizon => {
                        path.push(tau, 1, EventKind::Explosion);
                        t = tau;
                        k = 1;
                        continue;
                    }
                    _ => break,
                }
            }
            t += -(-rng.random::<f64>()).ln_1p() / k as f64;
            if t > horizon {
                break;
            }
            let l = self.env.sample_increment(t, rng.random())?;
            k = k.saturating_add(l).min(STATE_CAP);
            path.push(t, k, EventKind::Growth);
        }
        Ok(path)
    }

    /// States at `times` and explosion times for paths on streams
    /// `first..first + n`.
    pub fn summaries(&self, times: &[f64], horizon: f64, n: u64, seed: u64, first: u64) -> Result<Vec<PathSummary>> {
        par_streams(seed, first, n, |_, rng| {
            let path = self.sample_path(horizon, rng)?;
            Ok(PathSummary::of(&path, times))
        })
        .into_iter()
        .collect()
    }
}

/// What the aggregate statistics need from one path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSummary {
    pub states: Vec<u64>,
    pub explosions: Vec<f64>,
}

impl PathSummary {
    pub fn of(path: &JumpPath, times: &[f64]) -> Self {
        PathSummary {
            states: times.iter().map(|&t| path.size_at(t)).collect(),
            explosions: path.events.iter().filter(|e| e.kind == EventKind::Explosion).map(|e| e.time).collect(),
        }
    }
}

/// Empirical law of `C_t` with buckets `1..=max_bucket` and an overflow count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub t: f64,
    pub paths: u64,
    pub counts: Vec<u64>,
    pub beyond: u64,
}

impl EmpiricalLaw {
    pub fn from_states(t: f64, states: impl IntoIterator<Item = u64>, max_bucket: usize) -> Self {
        let mut counts = vec![0u64; max_bucket];
        let mut beyond = 0;
        let mut paths = 0;
        for k in states {
            paths += 1;
            match counts.get_mut(k as usize - 1) {
                Some(c) => *c += 1,
                None => beyond += 1,
            }
        }
        EmpiricalLaw { t, paths, counts, beyond }
    }

    /// Frequency of bucket `k`.
    pub fn fraction(&self, k: usize) -> f64 {
        self.counts.get(k - 1).map_or(0.0, |&c| c as f64 / self.paths as f64)
    }

    pub fn std_err(&self, k: usize) -> f64 {
        binomial_se(self.fraction(k), self.paths)
    }

    /// `(fraction - p_k) / √(p_k (1 - p_k)/N)` for `k = 1..=buckets`.
    pub fn z_scores(&self, buckets: usize, p: impl Fn(usize) -> f64) -> Vec<f64> {
        (1..=buckets)
            .map(|k| {
                let pk = p(k);
                let se = binomial_se(pk, self.paths);
                if se > 0.0 {
                    (self.fraction(k) - pk) / se
                } else if self.fraction(k) == pk {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    /// Pearson test over buckets `1..=buckets` plus one bin for the rest.
    pub fn chi_square(&self, buckets: usize, p: impl Fn(usize) -> f64) -> ChiSquare {
        let mut observed: Vec<u64> = (1..=buckets).map(|k| self.counts.get(k - 1).copied().unwrap_or(0)).collect();
        let mut probs: Vec<f64> = (1..=buckets).map(&p).collect();
        observed.push(self.paths - observed.iter().sum::<u64>());
        probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
        chi_square(&observed, &probs, self.paths, 5.0)
    }
}

/// Law of `C_t` over `n` paths.
pub fn empirical_law(sampler: &Sampler, t: f64, n: u64, cfg: &SamplerConfig) -> Result<EmpiricalLaw> {
    let laws = empirical_laws(sampler, &[t], n, cfg)?;
    Ok(laws.into_iter().next().expect("one time"))
}

/// Laws at several times from the same `n` paths.
pub fn empirical_laws(sampler: &Sampler, times: &[f64], n: u64, cfg: &SamplerConfig) -> Result<Vec<EmpiricalLaw>> {
    cfg.validate()?;
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let sums = sampler.summaries(times, horizon, n, cfg.seed, cfg.first_stream)?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| EmpiricalLaw::from_states(t, sums.iter().map(|s| s.states[i]), cfg.max_bucket))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub horizon: f64,
    pub paths: u64,
    pub mean: f64,
    pub std_err: f64,
    pub max_count: u64,
    /// Explosions strictly before the gelation time, over all paths.
    pub before_gel: u64,
    /// `∫_0^T φ` from the environment.
    pub phi_integral: f64,
    /// `(mean - ∫φ) / std_err`.
    pub z: f64,
}

impl CountStats {
    pub fn from_summaries(env: &Environment, horizon: f64, sums: &[PathSummary]) -> Self {
        let counts: Vec<u64> =
            sums.iter().map(|s| s.explosions.iter().filter(|&&t| t <= horizon).count() as u64).collect();
        let (mean, std_err) = mean_se(counts.iter().map(|&c| c as f64));
        let before_gel = sums.iter().map(|s| s.explosions.iter().filter(|&&t| t < env.t_gel).count() as u64).sum();
        let phi_integral = env.phi_integral_at(horizon);
        let z = if std_err > 0.0 {
            (mean - phi_integral) / std_err
        } else if mean == phi_integral {
            0.0
        } else {
            f64::INFINITY
        };
        CountStats {
            horizon,
            paths: sums.len() as u64,
            mean,
            std_err,
            max_count: counts.iter().copied().max().unwrap_or(0),
            before_gel,
            phi_integral,
            z,
        }
    }
}

/// Mean number of explosions on `[0, T]` against `∫_0^T φ`.
pub fn explosion_count_stats(sampler: &Sampler, horizon: f64, n: u64, cfg: &SamplerConfig) -> Result<CountStats> {
    cfg.validate()?;
    let sums = sampler.summaries(&[], horizon, n, cfg.seed, cfg.first_stream)?;
    Ok(CountStats::from_summaries(sampler.env, horizon, &sums))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbCheck {
    pub s: f64,
    pub y: f64,
    pub paths: u64,
    /// Fraction of paths from one at `s` without explosion in `(s, y]`.
    pub empirical: f64,
    pub predicted: f64,
    pub std_err: f64,
    pub z: f64,
}

/// No-explosion frequency on `(s, y]` from state one at `s`, against `ψ_y(s)`.
pub fn explosion_prob_check(sampler: &Sampler, s: f64, y: f64, n: u64, cfg: &SamplerConfig) -> Result<ProbCheck> {
    cfg.validate()?;
    let env = sampler.env;
    if !(y > env.t_gel) {
        return Err(Error::HorizonBeforeGel { y, t_gel: env.t_gel });
    }
    if !(s < y) {
        return Err(Error::InvalidConfig(format!("explosion check needs s < y, got s = {s}, y = {y}")));
    }
    let predicted = match sampler.family.curve(y) {
        Some(c) => c.psi_at(s),
        None => solve_psi(env, y, &CurveConfig::default())?.psi_at(s),
    };
    let survived = par_streams(cfg.seed, cfg.first_stream, n, |_, rng| {
        sampler.sample_path_from(s, 1, y, rng).map(|p| !p.events.iter().any(|e| e.kind == EventKind::Explosion))
    })
    .into_iter()
    .collect::<Result<Vec<bool>>>()?;
    let empirical = survived.iter().filter(|&&b| b).count() as f64 / n as f64;
    let std_err = binomial_se(predicted, n);
    let z = if std_err > 0.0 { (empirical - predicted) / std_err } else { 0.0 };
    Ok(ProbCheck { s, y, paths: n, empirical, predicted, std_err, z })
}
