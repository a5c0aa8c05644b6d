//! Event-driven simulation of the forest-fire process on `n` vertices.
//!
//! Every unordered pair of vertices (loops included) gains an edge at rate
//! `1/n`, and every vertex is struck by lightning at rate `lambda`, burning its
//! whole cluster back to singletons.

mod clusters;

pub use clusters::ClusterSet;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mass::{MassDistribution, EXACT_TOL};
use crate::rng::{par_streams, seeded_stream, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Distribution(MassDistribution),
    /// Explicit cluster sizes summing to `n`.
    Partition(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub lambda: f64,
    #[serde(default)]
    pub dagger: bool,
    pub horizon: f64,
    pub init: InitialCondition,
    pub seed: u64,
}

impl SimConfig {
    pub fn monodisperse(n: usize, lambda: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            n,
            lambda,
            dagger: false,
            horizon,
            init: InitialCondition::Distribution(MassDistribution::monodisperse()),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n >= u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("n = {}", self.n)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda = {}", self.lambda)));
        }
        if !(self.horizon >= 0.0) {
            return Err(Error::InvalidConfig(format!("horizon = {}", self.horizon)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Growth,
    Burn,
    Explosion,
}

/// One jump of a tagged cluster. Both sides of the jump are kept so either
/// path convention can be rebuilt.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    pub old_size: u64,
    pub new_size: u64,
    pub kind: EventKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    pub initial_size: u64,
    pub events: Vec<PathEvent>,
}

impl JumpPath {
    pub fn new(initial_size: u64) -> Self {
        JumpPath { initial_size, events: Vec::new() }
    }

    pub fn push(&mut self, time: f64, new_size: u64, kind: EventKind) {
        let old_size = self.size_at(f64::INFINITY);
        self.events.push(PathEvent { time, old_size, new_size, kind });
    }

    /// Size at time `t`, counting events at `t` itself.
    pub fn size_at(&self, t: f64) -> u64 {
        let idx = self.events.partition_point(|e| e.time <= t);
        if idx == 0 {
            self.initial_size
        } else {
            self.events[idx - 1].new_size
        }
    }

    pub fn count(&self, kind: EventKind, before: f64) -> usize {
        self.events.iter().filter(|e| e.kind == kind && e.time < before).count()
    }

    /// Checks time ordering and the reset-to-one rule.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut prev = f64::NEG_INFINITY;
        for e in &self.events {
            if !(e.time > prev) {
                return Err(format!("event times not increasing at {}", e.time));
            }
            prev = e.time;
            if matches!(e.kind, EventKind::Burn | EventKind::Explosion) && e.new_size != 1 {
                return Err(format!("{:?} at {} leaves size {}", e.kind, e.time, e.new_size));
            }
            if e.kind == EventKind::Growth && e.new_size <= e.old_size {
                return Err(format!("growth at {} does not increase size", e.time));
            }
        }
        Ok(())
    }
}

/// Outcome of one Gillespie step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// Two clusters joined into one of `size`.
    Merge {
        a: u32,
        b: u32,
        size: usize,
    },
    /// A pair inside one cluster: no change to the partition.
    Internal {
        a: u32,
        b: u32,
    },
    /// A loop: no change to the partition.
    Loop {
        vertex: u32,
    },
    /// An extra within-cluster edge from the doubled rates: no change.
    Doubled,
    Fire {
        vertex: u32,
        size: usize,
    },
}

/// `(n + 1)/2` plus, with the doubled rates, `Σ C(size, 2) / n`.
pub fn total_growth_rate(clusters: &ClusterSet, dagger: bool) -> f64 {
    let n = clusters.n() as f64;
    let base = (n + 1.0) / 2.0;
    if dagger {
        base + clusters.within_pairs() as f64 / n
    } else {
        base
    }
}

/// Rate at which some pair touching a cluster of size `k` gains an edge.
pub fn tagged_growth_rate(k: usize, n: usize, dagger: bool) -> f64 {
    if dagger {
        k as f64
    } else {
        let (k, n) = (k as f64, n as f64);
        (k * (n - k) + k + k * (k - 1.0) / 2.0) / n
    }
}

/// Largest-remainder rounding of `n v_l / l` to cluster counts; left-over
/// vertices become singletons. Returns sizes in increasing order.
pub fn round_partition(n: usize, dist: &MassDistribution) -> Result<Vec<usize>> {
    let infeasible = |reason: String| Error::InfeasibleInit { n, reason };
    if dist.tail_mass() > 0.0 {
        return Err(infeasible("initial distribution has an unbounded tail".into()));
    }
    dist.check_conservative(EXACT_TOL).map_err(|e| infeasible(e.to_string()))?;
    let mut counts = vec![0usize; dist.masses.len() + 1];
    let mut remainders = Vec::new();
    let mut used = 0usize;
    for (i, &m) in dist.masses.iter().enumerate() {
        let l = i + 1;
        if m == 0.0 {
            continue;
        }
        if l > n {
            return Err(infeasible(format!("mass at size {l} exceeds n")));
        }
        let x = n as f64 * m / l as f64;
        let whole = (x + 1e-9).floor();
        counts[l] = whole as usize;
        used += l * counts[l];
        remainders.push((x - whole, l));
    }
    if used > n {
        return Err(infeasible(format!("rounded counts use {used} vertices")));
    }
    let mut left = n - used;
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (r, l) in remainders {
        if r > 1e-9 && l <= left {
            counts[l] += 1;
            left -= l;
        }
    }
    counts[1] += left;
    let mut sizes = Vec::new();
    for (l, &c) in counts.iter().enumerate().skip(1) {
        sizes.extend(std::iter::repeat_n(l, c));
    }
    if sizes.iter().sum::<usize>() != n {
        return Err(infeasible("rounding repair failed".into()));
    }
    Ok(sizes)
}

/// The finite forest-fire process with a tagged vertex.
#[derive(Clone, Debug)]
pub struct Model {
    n: usize,
    lambda: f64,
    dagger: bool,
    clusters: ClusterSet,
    time: f64,
    rng: Stream,
    tagged: u32,
    tag_uniform: f64,
    path: JumpPath,
    steps: u64,
}

/// Build a model on stream 0 of `cfg.seed`.
pub fn init_model(cfg: &SimConfig) -> Result<Model> {
    Model::new(cfg, 0)
}

impl Model {
    pub fn new(cfg: &SimConfig, stream_id: u64) -> Result<Self> {
        cfg.validate()?;
        let sizes = match &cfg.init {
            InitialCondition::Distribution(d) => round_partition(cfg.n, d)?,
            InitialCondition::Partition(p) => {
                let total: usize = p.iter().sum();
                if total != cfg.n || p.contains(&0) {
                    return Err(Error::InfeasibleInit {
                        n: cfg.n,
                        reason: format!("partition covers {total} vertices"),
                    });
                }
                let mut p = p.clone();
                p.sort_unstable();
                p
            }
        };
        let clusters = ClusterSet::from_sizes(&sizes);
        let mut rng = seeded_stream(cfg.seed, stream_id);
        let tag_uniform: f64 = rng.random();
        let j = ((tag_uniform * cfg.n as f64) as u64).min(cfg.n as u64 - 1);
        let (tagged, size) = clusters.vertex_by_rank(j);
        Ok(Model {
            n: cfg.n,
            lambda: cfg.lambda,
            dagger: cfg.dagger,
            clusters,
            time: 0.0,
            rng,
            tagged,
            tag_uniform,
            path: JumpPath::new(size as u64),
            steps: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dagger(&self) -> bool {
        self.dagger
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn clusters(&self) -> &ClusterSet {
        &self.clusters
    }

    pub fn tagged_vertex(&self) -> u32 {
        self.tagged
    }

    /// The uniform that selected the tagged vertex through the paintbox.
    pub fn tag_uniform(&self) -> f64 {
        self.tag_uniform
    }

    pub fn tagged_size(&self) -> usize {
        self.clusters.size_of_vertex(self.tagged)
    }

    pub fn path(&self) -> &JumpPath {
        &self.path
    }

    pub fn total_growth_rate(&self) -> f64 {
        total_growth_rate(&self.clusters, self.dagger)
    }

    pub fn fire_rate(&self) -> f64 {
        self.n as f64 * self.lambda
    }

    fn total_rate(&self) -> f64 {
        self.total_growth_rate() + self.fire_rate()
    }

    /// Advance by one exponential holding time and apply the event.
    pub fn step(&mut self) -> Event {
        let dt: f64 = self.rng.sample::<f64, _>(Exp1) / self.total_rate();
        self.time += dt;
        self.apply_event()
    }

    /// Step until the next event would fall after `t`, then set the clock to `t`.
    pub fn run_until(&mut self, t: f64) {
        assert!(t >= self.time, "cannot run backwards");
        loop {
            let dt: f64 = self.rng.sample::<f64, _>(Exp1) / self.total_rate();
            if self.time + dt > t {
                self.time = t;
                return;
            }
            self.time += dt;
            self.apply_event();
        }
    }

    fn apply_event(&mut self) -> Event {
        self.steps += 1;
        let before = self.tagged_size();
        let growth = self.total_growth_rate();
        let pick = self.rng.random::<f64>() * (growth + self.fire_rate());
        let event = if pick < growth { self.growth_event(growth) } else { self.fire_event() };
        let after = self.tagged_size();
        if after != before {
            let kind = if after > before { EventKind::Growth } else { EventKind::Burn };
            self.path.push(self.time, after as u64, kind);
        }
        event
    }

    fn growth_event(&mut self, growth: f64) -> Event {
        let n = self.n as u64;
        if self.dagger {
            let extra = self.clusters.within_pairs() as f64 / self.n as f64;
            if self.rng.random::<f64>() * growth < extra {
                return Event::Doubled;
            }
        }
        // n^2 ordered slots plus n extra loop slots: uniform over unordered pairs with loops
        let x = self.rng.random_range(0..n * (n + 1));
        if x >= n * n {
            return Event::Loop { vertex: (x - n * n) as u32 };
        }
        let (a, b) = ((x / n) as u32, (x % n) as u32);
        if a == b {
            return Event::Loop { vertex: a };
        }
        match self.clusters.merge_vertices(a, b) {
            Some(id) => Event::Merge { a, b, size: self.clusters.cluster_size(id) },
            None => Event::Internal { a, b },
        }
    }

    fn fire_event(&mut self) -> Event {
        let v = self.rng.random_range(0..self.n as u32);
        let size = self.clusters.burn_vertex(v);
        Event::Fire { vertex: v, size }
    }

    /// Mass fractions `l · count_l / n` at the current time.
    pub fn snapshot(&self) -> MassDistribution {
        MassDistribution { as_of: self.time, masses: self.clusters.mass_fractions(), tail: None }
    }
}

pub fn snapshot_vn(model: &Model) -> MassDistribution {
    model.snapshot()
}

/// Snapshots and tagged path of one simulated replica.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Replica {
    pub stream_id: u64,
    pub snapshots: Vec<MassDistribution>,
    pub path: JumpPath,
}

/// Run `replicas` independent models (streams `0..replicas`) in parallel,
/// recording snapshots at the given increasing times.
pub fn simulate_replicas(cfg: &SimConfig, replicas: u64, snapshots: &[f64]) -> Result<Vec<Replica>> {
    cfg.validate()?;
    if snapshots.windows(2).any(|w| w[1] < w[0]) || snapshots.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidConfig("snapshot times must be nonnegative and increasing".into()));
    }
    let runs = par_streams(cfg.seed, 0, replicas, |id, _| -> Result<Replica> {
        let mut model = Model::new(cfg, id)?;
        let mut snaps = Vec::with_capacity(snapshots.len());
        for &t in snapshots {
            model.run_until(t);
            snaps.push(model.snapshot());
        }
        if cfg.horizon > model.time() {
            model.run_until(cfg.horizon);
        }
        Ok(Replica { stream_id: id, snapshots: snaps, path: model.path.clone() })
    });
    runs.into_iter().collect()
}

/// Bucket-wise mean of several distributions.
pub fn mean_distribution(dists: &[MassDistribution]) -> MassDistribution {
    let len = dists.iter().map(|d| d.masses.len()).max().unwrap_or(0);
    let mut masses = vec![0.0; len];
    for d in dists {
        for (m, x) in masses.iter_mut().zip(&d.masses) {
            *m += x;
        }
    }
    let r = dists.len().max(1) as f64;
    masses.iter_mut().for_each(|m| *m /= r);
    let as_of = dists.first().map_or(0.0, |d| d.as_of);
    MassDistribution { as_of, masses, tail: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, init: InitialCondition) -> SimConfig {
        SimConfig { n, lambda: 0.0, dagger: false, horizon: 1.0, init, seed: 7 }
    }

    #[test]
    fn init_examples() {
        let m = init_model(&SimConfig::monodisperse(100, 0.0, 1.0, 1)).unwrap();
        assert_eq!(m.clusters().counts()[1], 100);
        assert_eq!(m.tagged_size(), 1);

        let d = MassDistribution::point_mass(2);
        let m = init_model(&cfg(10, InitialCondition::Distribution(d))).unwrap();
        assert_eq!(m.clusters().counts()[2], 5);
        assert_eq!(m.clusters().cluster_count(), 5);

        let d = MassDistribution::from_masses(vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(round_partition(10, &d).unwrap(), vec![1, 1, 1, 1, 1, 1, 1, 3]);
    }

    #[test]
    fn infeasible_inits() {
        let d = MassDistribution::point_mass(20);
        assert!(matches!(round_partition(10, &d), Err(Error::InfeasibleInit { .. })));
        let d = MassDistribution::from_masses(vec![0.5]).unwrap();
        assert!(matches!(round_partition(10, &d), Err(Error::InfeasibleInit { .. })));
        let c = cfg(10, InitialCondition::Partition(vec![3, 3]));
        assert!(matches!(init_model(&c), Err(Error::InfeasibleInit { .. })));
    }

    #[test]
    fn rate_examples() {
        let c = ClusterSet::singletons(10);
        assert_eq!(total_growth_rate(&c, false), 5.5);
        assert_eq!(total_growth_rate(&c, true), 5.5);
        let c = ClusterSet::from_sizes(&[10]);
        assert!((total_growth_rate(&c, true) - 10.0).abs() < 1e-12);
        assert!((tagged_growth_rate(3, 10, false) - 2.7).abs() < 1e-12);
        assert_eq!(tagged_growth_rate(3, 10, true), 3.0);
        assert!((tagged_growth_rate(10, 10, false) - 5.5).abs() < 1e-12);
    }

    #[test]
    fn snapshot_examples() {
        let m = init_model(&cfg(10, InitialCondition::Partition(vec![4, 3, 2, 1]))).unwrap();
        assert_eq!(m.snapshot().masses, vec![0.1, 0.2, 0.3, 0.4]);
        let mut m = m;
        let big = m.clusters().vertex_by_rank(9).0;
        m.clusters.burn_vertex(big);
        assert_eq!(m.snapshot().masses, vec![0.5, 0.2, 0.3]);
    }

    #[test]
    fn run_until_now_is_a_no_op() {
        let mut m = init_model(&SimConfig::monodisperse(50, 0.1, 1.0, 3)).unwrap();
        m.run_until(0.0);
        assert_eq!(m.steps(), 0);
        m.run_until(0.3);
        let steps = m.steps();
        m.run_until(0.3);
        assert_eq!(m.steps(), steps);
        assert_eq!(m.time(), 0.3);
    }

    #[test]
    fn heavy_fire_keeps_clusters_small() {
        let mut m = init_model(&SimConfig::monodisperse(1000, 50.0, 2.0, 9)).unwrap();
        m.run_until(2.0);
        assert!(m.snapshot().masses[0] > 0.95);
    }

    #[test]
    fn bookkeeping_survives_long_runs() {
        for dagger in [false, true] {
            let mut c = SimConfig::monodisperse(2000, 0.002, 10.0, 11);
            c.dagger = dagger;
            let mut m = init_model(&c).unwrap();
            for _ in 0..200_000 {
                m.step();
            }
            m.clusters().check_consistency().unwrap();
            m.path().validate().unwrap();
            let total: f64 = m.snapshot().masses.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
