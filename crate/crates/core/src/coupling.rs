//! Joint construction of the finite tagged cluster `Cⁿ` and a copy `C̃` of
//! the limiting process.
//!
//! Both start from one shared uniform. While the sizes agree and are at most
//! `K`, every growth of `Cⁿ` draws its partner by a shared uniform, which also
//! draws the increment of `C̃` from the limiting law. Large clusters evolve
//! independently until one of them resets to one. The state bit `s` records
//! the first time the construction fails to keep the two close.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::characteristics::CurveFamily;
use crate::error::{Error, Result};
use crate::finite_model::{round_partition, ClusterSet};
use crate::kinetics::Environment;
use crate::mass::MassDistribution;
use crate::rng::{par_streams, seeded_stream, Stream};
use crate::state::metric_d_e;
use crate::stats::binomial_se;

/// Offset between the stream of a replica and the stream that drives the
/// independent moves of its `C̃`.
pub const TILDE_STREAM_OFFSET: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
}

/// Partition of `{0, 1} × E × E` by the state bit and the two sizes.
pub fn classify_region(s_bit: bool, cn: u64, ctilde: u64, k: u64) -> Region {
    if s_bit {
        Region::E5
    } else if cn == ctilde && cn <= k {
        Region::E1
    } else if cn > k && ctilde > k {
        Region::E2
    } else if cn > k && ctilde == 1 {
        Region::E3
    } else if cn == 1 && ctilde > k {
        Region::E4
    } else {
        Region::E6
    }
}

/// Transitions allowed while the state bit is zero.
fn allowed(from: Region, to: Region) -> bool {
    use Region::*;
    matches!(
        (from, to),
        (E1, E1) | (E1, E2) | (E2, E2) | (E2, E3) | (E2, E4) | (E3, E3) | (E3, E1) | (E4, E4) | (E4, E1)
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureCause {
    #[serde(rename = "init")]
    Init,
    #[serde(rename = "paintbox")]
    Paintbox,
    #[serde(rename = "self-edge")]
    SelfEdge,
    #[serde(rename = "small-fire")]
    SmallFire,
    #[serde(rename = "E3-jump")]
    E3Jump,
    #[serde(rename = "E4-jump")]
    E4Jump,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    pub s_bit: bool,
    pub cn: u64,
    pub ctilde: u64,
    pub region: Region,
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingConfig {
    pub n: usize,
    pub lambda: f64,
    /// Region threshold `K`.
    pub k: u64,
    pub horizon: f64,
    pub seed: u64,
    pub replicas: u64,
    pub first_stream: u64,
    /// Explosion threshold for `C̃`.
    pub threshold: u64,
    /// Times at which both sizes are recorded.
    pub observe: Vec<f64>,
    pub keep_trace: bool,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            n: 10_000,
            lambda: 0.0,
            k: 16,
            horizon: 2.0,
            seed: 0,
            replicas: 100,
            first_stream: 0,
            threshold: 100_000,
            observe: Vec::new(),
            keep_trace: false,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 || self.n >= u32::MAX as usize {
            return bad(format!("coupling.n = {}", self.n));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("coupling.lambda = {}", self.lambda));
        }
        if self.k < 1 {
            return bad("coupling.k must be at least 1".into());
        }
        if !(self.horizon >= 0.0) {
            return bad(format!("coupling.horizon = {}", self.horizon));
        }
        if self.threshold < 1000 || self.threshold <= self.k {
            return bad(format!("coupling.threshold = {}", self.threshold));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub s_bit: bool,
    pub cn: u64,
    pub ctilde: u64,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub stream_id: u64,
    /// Failure time; `None` if the state bit stayed zero up to the horizon.
    pub tau: Option<f64>,
    pub cause: Option<FailureCause>,
    /// `sup_{t <= T} d_E(Cⁿ_t, C̃_t)`.
    pub sup_de: f64,
    pub region_time: BTreeMap<Region, f64>,
    /// Events that changed `(s, Cⁿ, C̃)`.
    pub events: u64,
    /// Events after which `s = 0` but `d_E` exceeded `1/K`.
    pub distance_violations: u64,
    /// Region changes outside the cycle `E1 → E2 → (E3 | E4) → E1` with `s = 0`.
    pub cycle_violations: u64,
    /// `(Cⁿ, C̃)` at the configured observation times.
    pub observed: Vec<(u64, u64)>,
    pub points: Vec<TracePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Clock {
    /// `C̃` moves only together with `Cⁿ`.
    Joint,
    Jump(f64),
    Explosion(f64),
    /// No explosion before the end of the curve family.
    Never,
}

impl Clock {
    fn time(self) -> f64 {
        match self {
            Clock::Jump(t) | Clock::Explosion(t) => t,
            Clock::Joint | Clock::Never => f64::INFINITY,
        }
    }
}

struct Replica<'a> {
    env: &'a Environment,
    family: &'a CurveFamily,
    cfg: &'a CouplingConfig,
    rng: Stream,
    tilde_rng: Stream,
    clusters: ClusterSet,
    tagged: u32,
    t: f64,
    s_bit: bool,
    cn: u64,
    ct: u64,
    region: Region,
    clock: Clock,
    trace: CouplingTrace,
    next_obs: usize,
}

impl<'a> Replica<'a> {
    fn record(&mut self) -> Result<()> {
        let region = classify_region(self.s_bit, self.cn, self.ct, self.cfg.k);
        if region == Region::E6 {
            return Err(Error::RegionE6Reached { t: self.t, s_bit: self.s_bit, cn: self.cn, ctilde: self.ct });
        }
        let d = metric_d_e(self.cn, self.ct);
        if !self.s_bit {
            if d > 1.0 / self.cfg.k as f64 {
                self.trace.distance_violations += 1;
            }
            if !allowed(self.region, region) {
                self.trace.cycle_violations += 1;
            }
        }
        self.region = region;
        self.trace.sup_de = self.trace.sup_de.max(d);
        self.trace.events += 1;
        if self.cfg.keep_trace {
            self.trace.points.push(TracePoint { t: self.t, s_bit: self.s_bit, cn: self.cn, ctilde: self.ct, region });
        }
        Ok(())
    }

    fn fail(&mut self, cause: FailureCause) {
        if !self.s_bit {
            self.s_bit = true;
            self.trace.tau = Some(self.t);
            self.trace.cause = Some(cause);
        }
    }

    /// Move the clock to `t`, crediting region time and observations.
    fn advance(&mut self, t: f64) {
        while let Some(&o) = self.cfg.observe.get(self.next_obs) {
            if o >= t {
                break;
            }
            self.trace.observed.push((self.cn, self.ct));
            self.next_obs += 1;
        }
        *self.trace.region_time.entry(self.region).or_insert(0.0) += t - self.t;
        self.t = t;
    }

    fn tagged_size(&self) -> u64 {
        self.clusters.size_of_vertex(self.tagged) as u64
    }

    /// Start an independent clock for `C̃` from its current state.
    fn schedule(&mut self) -> Result<()> {
        self.clock = if self.ct > self.cfg.threshold {
            let u = 1.0 - self.tilde_rng.random::<f64>();
            match self.family.explosion_time(self.env, self.t, self.ct, u)? {
                Some(tau) => Clock::Explosion(tau),
                None => Clock::Never,
            }
        } else {
            let e: f64 = self.tilde_rng.sample(Exp1);
            Clock::Jump(self.t + e / self.ct as f64)
        };
        Ok(())
    }

    /// After a transition, decide whether `C̃` runs on its own clock.
    fn update_clock(&mut self) -> Result<()> {
        match (self.region, self.clock) {
            (Region::E1, _) => self.clock = Clock::Joint,
            (_, Clock::Joint) => self.schedule()?,
            _ => {}
        }
        Ok(())
    }

    fn tilde_event(&mut self) -> Result<()> {
        match self.clock {
            Clock::Jump(_) => {
                let l = self.env.sample_increment(self.t, self.tilde_rng.random())?;
                if self.region == Region::E3 {
                    self.fail(FailureCause::E3Jump);
                }
                self.ct = self.ct.saturating_add(l);
            }
            Clock::Explosion(_) => self.ct = 1,
            Clock::Joint | Clock::Never => unreachable!("no pending move of C̃"),
        }
        self.schedule()?;
        self.record()?;
        self.update_clock()
    }

    /// A growth clock of a pair touching the tagged cluster rings.
    fn tagged_growth(&mut self) -> Result<()> {
        let n = self.cfg.n;
        let u: f64 = self.rng.random();
        let j = ((u * n as f64) as u64).min(n as u64 - 1);
        let (partner, size) = self.clusters.vertex_by_rank(j);
        let own = self.clusters.cluster_of(self.tagged);
        let self_edge = self.clusters.cluster_of(partner) == own;
        if !self_edge {
            self.clusters.merge_vertices(self.tagged, partner);
        }
        let l = size as u64;
        match self.region {
            Region::E1 => {
                let lt = self.env.sample_increment(self.t, u)?;
                if self_edge {
                    self.fail(FailureCause::SelfEdge);
                } else if l != lt {
                    self.fail(FailureCause::Paintbox);
                }
                self.ct = self.ct.saturating_add(lt);
            }
            Region::E4 => self.fail(FailureCause::E4Jump),
            _ => {}
        }
        let before = self.cn;
        self.cn = self.tagged_size();
        if self.cn == before && self.region != Region::E1 && self.region != Region::E4 {
            return Ok(());
        }
        self.record()?;
        self.update_clock()
    }

    fn tagged_fire(&mut self) -> Result<()> {
        let own = self.clusters.cluster_of(self.tagged);
        self.clusters.burn(own);
        match self.region {
            Region::E1 => self.fail(FailureCause::SmallFire),
            Region::E4 => return Ok(()),
            _ => {}
        }
        self.cn = 1;
        self.record()?;
        self.update_clock()
    }

    /// Merge two clusters that both avoid the tagged one, uniformly over such
    /// pairs of vertices.
    fn rest_growth(&mut self) {
        let n = self.cfg.n as u32;
        let own = self.clusters.cluster_of(self.tagged);
        loop {
            let a = self.rng.random_range(0..n);
            let b = self.rng.random_range(0..n);
            let (ca, cb) = (self.clusters.cluster_of(a), self.clusters.cluster_of(b));
            if ca != own && cb != own && ca != cb {
                self.clusters.merge_vertices(a, b);
                return;
            }
        }
    }

    fn rest_fire(&mut self) {
        let n = self.cfg.n as u32;
        let own = self.clusters.cluster_of(self.tagged);
        loop {
            let v = self.rng.random_range(0..n);
            let c = self.clusters.cluster_of(v);
            if c != own {
                self.clusters.burn(c);
                return;
            }
        }
    }

    fn run(mut self) -> Result<CouplingTrace> {
        let (n, lambda, horizon) = (self.cfg.n as f64, self.cfg.lambda, self.cfg.horizon);
        self.record()?;
        self.update_clock()?;
        loop {
            let k = self.tagged_size() as f64;
            let outside = self.clusters.sum_sq() as f64 - k * k;
            let rest = ((n - k) * (n - k) - outside) / (2.0 * n);
            let rates = [k, rest.max(0.0), lambda * k, lambda * (n - k)];
            let total: f64 = rates.iter().sum();
            let e: f64 = self.rng.sample(Exp1);
            let t_next = if total > 0.0 { self.t + e / total } else { f64::INFINITY };
            let t_clock = self.clock.time();
            if t_clock.min(t_next) > horizon {
                self.advance(horizon);
                break;
            }
            if t_clock < t_next {
                // the finite clocks are memoryless, so their draw is discarded
                self.advance(t_clock);
                self.tilde_event()?;
                continue;
            }
            self.advance(t_next);
            let mut pick = self.rng.random::<f64>() * total;
            let mut which = 0;
            while which < 3 && pick >= rates[which] {
                pick -= rates[which];
                which += 1;
            }
            match which {
                0 => self.tagged_growth()?,
                1 => self.rest_growth(),
                2 => self.tagged_fire()?,
                _ => self.rest_fire(),
            }
        }
        while self.trace.observed.len() < self.cfg.observe.len() {
            self.trace.observed.push((self.cn, self.ct));
        }
        Ok(self.trace)
    }
}

/// Check that the inputs can drive a coupling on `[0, T]`.
fn check_inputs(env: &Environment, family: &CurveFamily, cfg: &CouplingConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    env.check_covers(cfg.horizon)?;
    if cfg.horizon > env.t_gel && family.y_max() < cfg.horizon - 1e-12 {
        return Err(Error::CurveFamilyTooSparse {
            s: 0.0,
            reason: format!("family ends at {}, horizon is {}", family.y_max(), cfg.horizon),
        });
    }
    if cfg.observe.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("coupling.observe must be sorted".into()));
    }
    round_partition(cfg.n, &env.init)
}

fn run_with_sizes(
    env: &Environment,
    family: &CurveFamily,
    cfg: &CouplingConfig,
    sizes: &[usize],
    stream_id: u64,
) -> Result<CouplingTrace> {
    let mut rng = seeded_stream(cfg.seed, stream_id);
    let tilde_rng = seeded_stream(cfg.seed, stream_id + TILDE_STREAM_OFFSET);
    let clusters = ClusterSet::from_sizes(sizes);
    let u: f64 = rng.random();
    let j = ((u * cfg.n as f64) as u64).min(cfg.n as u64 - 1);
    let (tagged, size) = clusters.vertex_by_rank(j);
    let ct = env.sample_increment(0.0, u)?;
    let cn = size as u64;
    let mut rep = Replica {
        env,
        family,
        cfg,
        rng,
        tilde_rng,
        clusters,
        tagged,
        t: 0.0,
        s_bit: false,
        cn,
        ct,
        region: Region::E1,
        clock: Clock::Joint,
        trace: CouplingTrace {
            stream_id,
            tau: None,
            cause: None,
            sup_de: 0.0,
            region_time: BTreeMap::new(),
            events: 0,
            distance_violations: 0,
            cycle_violations: 0,
            observed: Vec::with_capacity(cfg.observe.len()),
            points: Vec::new(),
        },
        next_obs: 0,
    };
    if cn != ct {
        rep.fail(FailureCause::Init);
    }
    rep.region = classify_region(rep.s_bit, cn, ct, cfg.k);
    rep.run()
}

/// One coupled replica on stream `stream_id`.
pub fn run_coupling(
    env: &Environment,
    family: &CurveFamily,
    cfg: &CouplingConfig,
    stream_id: u64,
) -> Result<CouplingTrace> {
    let sizes = check_inputs(env, family, cfg)?;
    run_with_sizes(env, family, cfg, &sizes, stream_id)
}

/// `cfg.replicas` replicas on streams `first_stream..`, in parallel.
pub fn run_replicas(env: &Environment, family: &CurveFamily, cfg: &CouplingConfig) -> Result<Vec<CouplingTrace>> {
    let sizes = check_inputs(env, family, cfg)?;
    par_streams(cfg.seed, cfg.first_stream, cfg.replicas, |id, _| run_with_sizes(env, family, cfg, &sizes, id))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureStats {
    pub n: usize,
    pub k: u64,
    pub replicas: u64,
    /// Fraction with `τ <= T`.
    pub p_fail: f64,
    pub p_fail_se: f64,
    pub eps: f64,
    /// Fraction with `sup d_E > eps`.
    pub p_sup: f64,
    pub p_sup_se: f64,
    /// Median, 90% and 99% quantiles of `sup d_E`.
    pub sup_quantiles: [f64; 3],
    pub causes: BTreeMap<FailureCause, u64>,
    pub e6_free: bool,
    pub distance_violations: u64,
    pub cycle_violations: u64,
}

/// Aggregate replicas. Needs at least 30 of them.
pub fn failure_stats(cfg: &CouplingConfig, traces: &[CouplingTrace], eps: f64) -> Result<FailureStats> {
    let r = traces.len() as u64;
    if r < 30 {
        return Err(Error::InvalidConfig(format!("failure statistics need at least 30 replicas, got {r}")));
    }
    let failed = traces.iter().filter(|t| t.tau.is_some_and(|x| x <= cfg.horizon)).count() as f64 / r as f64;
    let exceed = traces.iter().filter(|t| t.sup_de > eps).count() as f64 / r as f64;
    let mut sups: Vec<f64> = traces.iter().map(|t| t.sup_de).collect();
    sups.sort_by(f64::total_cmp);
    let q = |p: f64| sups[((p * r as f64).ceil() as usize).clamp(1, sups.len()) - 1];
    let mut causes = BTreeMap::new();
    for c in traces.iter().filter_map(|t| t.cause) {
        *causes.entry(c).or_insert(0) += 1;
    }
    Ok(FailureStats {
        n: cfg.n,
        k: cfg.k,
        replicas: r,
        p_fail: failed,
        p_fail_se: binomial_se(failed, r),
        eps,
        p_sup: exceed,
        p_sup_se: binomial_se(exceed, r),
        sup_quantiles: [q(0.5), q(0.9), q(0.99)],
        causes,
        e6_free: true,
        distance_violations: traces.iter().map(|t| t.distance_violations).sum(),
        cycle_violations: traces.iter().map(|t| t.cycle_violations).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaintboxCheck {
    pub k: usize,
    pub eta: f64,
    pub trials: u64,
    pub mismatches: u64,
    pub rate: f64,
    /// `6 η`.
    pub bound: f64,
    /// Binomial standard error at the bound.
    pub std_err: f64,
    pub pass: bool,
}

/// Index `c` with `s_c <= u < s_{c+1}` for the partial sums of `masses`,
/// counted from one; `len + 1` when `u` is past the last sum.
fn paintbox_index(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u) + 1
}

/// Shared-uniform draws from `a` and `b` under the hypotheses
/// `|a_k - b_k| <= η/K²` for `k <= K` and `Σ_{k>K} a_k <= η`.
pub fn paintbox_mismatch_bound_check(
    a: &MassDistribution,
    b: &MassDistribution,
    k: usize,
    eta: f64,
    trials: u64,
    seed: u64,
) -> Result<PaintboxCheck> {
    if k == 0 || !(eta > 0.0) || trials == 0 {
        return Err(Error::InvalidConfig("paintbox check needs K >= 1, eta > 0 and trials > 0".into()));
    }
    let slack = 1e-12;
    let limit = eta / (k * k) as f64;
    for i in 1..=k {
        let d = (a.get(i) - b.get(i)).abs();
        if d > limit * (1.0 + slack) {
            return Err(Error::HypothesisUnmet(format!("|a_{i} - b_{i}| = {d} exceeds eta/K^2 = {limit}")));
        }
    }
    let tail_a = a.total() - (1..=k).map(|i| a.get(i)).sum::<f64>();
    if tail_a > eta * (1.0 + slack) {
        return Err(Error::HypothesisUnmet(format!("mass of a beyond K is {tail_a}, above eta = {eta}")));
    }
    let cum = |d: &MassDistribution| {
        let mut acc = 0.0;
        d.masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect::<Vec<f64>>()
    };
    let (ca, cb) = (cum(a), cum(b));
    let per_stream = 1u64 << 16;
    let streams = trials.div_ceil(per_stream);
    let mismatches: u64 = par_streams(seed, 0, streams, |id, rng| {
        let count = per_stream.min(trials - id * per_stream);
        (0..count)
            .filter(|_| {
                let u: f64 = rng.random();
                paintbox_index(&ca, u) != paintbox_index(&cb, u)
            })
            .count() as u64
    })
    .into_iter()
    .sum();
    let rate = mismatches as f64 / trials as f64;
    let bound = 6.0 * eta;
    let std_err = binomial_se(bound.min(1.0), trials);
    Ok(PaintboxCheck { k, eta, trials, mismatches, rate, bound, std_err, pass: rate <= bound + 3.0 * std_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::{default_horizons, CurveConfig};
    use crate::kinetics::{solve_cffe, SolverConfig};

    #[test]
    fn regions() {
        assert_eq!(classify_region(false, 5, 5, 10), Region::E1);
        assert_eq!(classify_region(false, 12, 1, 10), Region::E3);
        assert_eq!(classify_region(false, 3, 7, 10), Region::E6);
        assert_eq!(classify_region(false, 11, 30, 10), Region::E2);
        assert_eq!(classify_region(false, 1, 30, 10), Region::E4);
        assert_eq!(classify_region(true, 3, 7, 10), Region::E5);
        assert_eq!(classify_region(false, 1, 1, 10), Region::E1);
    }

    #[test]
    fn cycle_rules() {
        use Region::*;
        assert!(allowed(E1, E2) && allowed(E2, E4) && allowed(E3, E1));
        assert!(!allowed(E1, E3) && !allowed(E2, E1) && !allowed(E4, E3));
    }

    fn setup(horizon: f64) -> (Environment, CurveFamily) {
        let env = solve_cffe(&MassDistribution::monodisperse(), &SolverConfig::new(256, horizon)).unwrap();
        let cc = CurveConfig::default();
        let fam = CurveFamily::build(&env, &default_horizons(&env, &cc, &[]), &cc).unwrap();
        (env, fam)
    }

    #[test]
    fn replicas_respect_invariants() {
        let (env, fam) = setup(2.0);
        let cfg = CouplingConfig {
            n: 2000,
            lambda: 2000f64.powf(-0.3),
            k: 8,
            replicas: 40,
            keep_trace: true,
            ..Default::default()
        };
        let traces = run_replicas(&env, &fam, &cfg).unwrap();
        for tr in &traces {
            assert_eq!(tr.distance_violations, 0);
            assert_eq!(tr.cycle_violations, 0);
            let total: f64 = tr.region_time.values().sum();
            assert!((total - 2.0).abs() < 1e-9);
            for w in tr.points.windows(2) {
                assert!(w[1].t >= w[0].t);
                assert!(!(w[0].s_bit && !w[1].s_bit));
            }
            if let Some(tau) = tr.tau {
                let first = tr.points.iter().find(|p| p.s_bit).unwrap();
                assert_eq!(first.t, tau);
            }
        }
        let stats = failure_stats(&cfg, &traces, 0.1).unwrap();
        assert!(stats.p_fail > 0.0);
    }

    #[test]
    fn no_fires_means_no_fire_failures() {
        let (env, fam) = setup(2.0);
        let cfg = CouplingConfig { n: 1000, lambda: 0.0, k: 8, replicas: 40, ..Default::default() };
        let traces = run_replicas(&env, &fam, &cfg).unwrap();
        assert!(traces.iter().all(|t| t.cause != Some(FailureCause::SmallFire)));
    }

    #[test]
    fn tiny_horizon_fails_only_at_start() {
        let (_, fam) = setup(1.0);
        let init = MassDistribution::from_masses(vec![0.5, 0.5]).unwrap();
        let env2 = solve_cffe(&init, &SolverConfig::new(256, 0.5)).unwrap();
        let cfg = CouplingConfig { n: 1000, lambda: 0.1, k: 8, replicas: 200, horizon: 1e-9, ..Default::default() };
        let traces = run_replicas(&env2, &fam, &cfg).unwrap();
        for t in &traces {
            assert!(t.cause.is_none() || t.cause == Some(FailureCause::Init));
        }
    }

    #[test]
    fn identical_distributions_rarely_mismatch() {
        let d = MassDistribution::from_masses(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let c = paintbox_mismatch_bound_check(&d, &d, 4, 0.01, 100_000, 1).unwrap();
        assert_eq!(c.mismatches, 0);
        assert!(c.pass);
    }

    #[test]
    fn hypotheses_are_checked() {
        let a = MassDistribution::from_masses(vec![0.5, 0.5]).unwrap();
        let b = MassDistribution::from_masses(vec![0.6, 0.4]).unwrap();
        let r = paintbox_mismatch_bound_check(&a, &b, 2, 0.01, 1000, 1);
        assert!(matches!(r, Err(Error::HypothesisUnmet(_))));
    }
}
