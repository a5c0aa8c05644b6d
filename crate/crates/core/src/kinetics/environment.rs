//! Time-gridded solution of the limiting equations with interpolation,
//! paintbox sampling, and a JSON + binary on-disk form.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mass::{invert_survival, MassDistribution, TailModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// Pure coagulation: mass is lost to the gel after gelation.
    Smoluchowski,
    /// Burned mass re-enters at size one at the rate that keeps the total fixed.
    CriticalFire,
}

/// Per-solve quality measures.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// `Σ_{k<=K} v_k + tail - 1` at each grid point.
    pub defect: Vec<f64>,
    /// Burn-rate estimate from truncations `K/2, K/4` at each grid point.
    pub phi_coarse: Vec<f64>,
    pub steps: u64,
    pub halvings: u64,
    pub min_step: f64,
    pub fft: bool,
}

/// The limiting medium `t -> (v(t), φ(t))` on a grid covering `[0, T]`.
#[derive(Clone, Debug)]
pub struct Environment {
    pub closure: Closure,
    pub k_max: usize,
    pub t_gel: f64,
    pub init: MassDistribution,
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    /// `∫_0^t φ` at each grid point.
    pub phi_integral: Vec<f64>,
    pub tails: Vec<Option<TailModel>>,
    pub diagnostics: SolveDiagnostics,
    v: Vec<f64>,
    cum: Vec<f64>,
}

fn prefix_sums(row: &[f64]) -> impl Iterator<Item = f64> + '_ {
    row.iter().scan(0.0, |acc, &x| {
        *acc += x;
        Some(*acc)
    })
}

impl Environment {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_rows(
        closure: Closure,
        k_max: usize,
        t_gel: f64,
        init: MassDistribution,
        times: Vec<f64>,
        v: Vec<f64>,
        phi: Vec<f64>,
        phi_integral: Vec<f64>,
        tails: Vec<Option<TailModel>>,
        diagnostics: SolveDiagnostics,
    ) -> Self {
        assert_eq!(v.len(), times.len() * k_max);
        let cum = v.chunks(k_max).flat_map(prefix_sums).collect();
        Environment { closure, k_max, t_gel, init, times, phi, phi_integral, tails, diagnostics, v, cum }
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty grid")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.v[i * self.k_max..(i + 1) * self.k_max]
    }

    fn cum_row(&self, i: usize) -> &[f64] {
        &self.cum[i * self.k_max..(i + 1) * self.k_max]
    }

    fn tail_mass(&self, i: usize) -> f64 {
        self.tails[i].as_ref().map_or(0.0, TailModel::mass)
    }

    /// Total mass (finite part plus tail) at grid point `i`.
    pub fn row_total(&self, i: usize) -> f64 {
        self.cum_row(i)[self.k_max - 1] + self.tail_mass(i)
    }

    pub fn dist(&self, i: usize) -> MassDistribution {
        MassDistribution { as_of: self.times[i], masses: self.row(i).to_vec(), tail: self.tails[i].clone() }
    }

    /// Error unless the grid reaches `t`.
    pub fn check_covers(&self, t: f64) -> Result<()> {
        if t > self.horizon() * (1.0 + 1e-12) + 1e-12 {
            Err(Error::EnvTooShort { needed: t, available: self.horizon() })
        } else {
            Ok(())
        }
    }

    /// Grid interval `[times[i], times[i+1]]` containing `t` and the weight of
    /// the right end. Times beyond the grid clamp to its ends.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, 0.0);
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        (i, w)
    }

    fn blend(&self, t: f64, f: impl Fn(usize) -> f64) -> f64 {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            f(i)
        } else {
            (1.0 - w) * f(i) + w * f(i + 1)
        }
    }

    /// `v_k(t)` by linear interpolation in time.
    pub fn mass(&self, t: f64, k: usize) -> f64 {
        if k == 0 || k > self.k_max {
            return 0.0;
        }
        self.blend(t, |i| self.row(i)[k - 1])
    }

    /// Total mass including the tail model.
    pub fn total(&self, t: f64) -> f64 {
        self.blend(t, |i| self.row_total(i))
    }

    /// Burn rate; zero before gelation.
    pub fn phi_at(&self, t: f64) -> f64 {
        if t < self.t_gel {
            return 0.0;
        }
        self.blend(t, |i| self.phi[i])
    }

    /// `∫_0^t φ(s) ds`.
    pub fn phi_integral_at(&self, t: f64) -> f64 {
        self.blend(t, |i| self.phi_integral[i])
    }

    /// Interpolated distribution at `t`. Tail parameters are interpolated too.
    pub fn dist_at(&self, t: f64) -> MassDistribution {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            let mut d = self.dist(i);
            d.as_of = t;
            return d;
        }
        let masses = self.row(i).iter().zip(self.row(i + 1)).map(|(a, b)| (1.0 - w) * a + w * b).collect();
        let tail = match (&self.tails[i], &self.tails[i + 1]) {
            (None, None) => None,
            (a, b) => {
                let (ca, ra) = a.as_ref().map_or((0.0, 0.0), |t| (t.amplitude, t.decay));
                let (cb, rb) = b.as_ref().map_or((0.0, 0.0), |t| (t.amplitude, t.decay));
                let decay = if a.is_none() {
                    rb
                } else if b.is_none() {
                    ra
                } else {
                    (1.0 - w) * ra + w * rb
                };
                Some(TailModel { cutoff: self.k_max, amplitude: (1.0 - w) * ca + w * cb, decay })
            }
        };
        MassDistribution { as_of: t, masses, tail }
    }

    /// `Σ_{k<=K} z^k v_k + tail` at grid point `i`.
    fn row_generating(&self, i: usize, z: f64) -> f64 {
        let mut zk = 1.0;
        let mut acc = 0.0;
        for &m in self.row(i) {
            zk *= z;
            if zk < 1e-300 {
                break;
            }
            acc += zk * m;
        }
        acc + self.tails[i].as_ref().map_or(0.0, |t| t.generating(z))
    }

    /// `Σ (1 - z^k) v_k` with `z = 1 - w2`, without cancellation near `z = 1`.
    fn row_complement(&self, i: usize, w2: f64) -> f64 {
        let z = 1.0 - w2;
        let mut zk = 1.0;
        let mut one_minus = 0.0;
        let mut acc = 0.0;
        let row = self.row(i);
        for (k, &m) in row.iter().enumerate() {
            one_minus += zk * w2;
            zk *= z;
            acc += one_minus * m;
            if zk < 1e-300 {
                acc += self.cum_row(i)[self.k_max - 1] - self.cum_row(i)[k];
                break;
            }
        }
        acc + self.tails[i].as_ref().map_or(0.0, |t| t.generating_complement(w2))
    }

    /// `Σ z^k v_k(t)` including the tail, without normalization.
    pub fn generating(&self, t: f64, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return self.total(t);
        }
        self.blend(t, |i| self.row_generating(i, z))
    }

    /// Generating function `X_t(z)` of the normalized distribution, so `X_t(1) = 1`.
    pub fn eval_x(&self, t: f64, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return 1.0;
        }
        self.blend(t, |i| self.row_generating(i, z)) / self.total(t)
    }

    /// `1 - X_t(1 - w2)` for the normalized distribution.
    pub fn one_minus_x(&self, t: f64, w2: f64) -> f64 {
        if w2 <= 0.0 {
            return 0.0;
        }
        if w2 >= 1.0 {
            return 1.0;
        }
        self.blend(t, |i| self.row_complement(i, w2)) / self.total(t)
    }

    /// Paintbox draw from the normalized distribution at `t`.
    pub fn sample_increment(&self, t: f64, u: f64) -> Result<u64> {
        let (i, w) = self.locate(t);
        let (j, w) = if w == 0.0 { (i, 0.0) } else { (i + 1, w) };
        debug_assert!(
            [i, j].iter().all(|&r| {
                self.times[r] >= self.t_gel
                    || self.tails[r].as_ref().is_none_or(|tl| tl.amplitude == 0.0 || tl.decay > 0.0)
            }),
            "undamped tail before gelation"
        );
        let (ca, cb) = (self.cum_row(i), self.cum_row(j));
        let cum = |k: usize| (1.0 - w) * ca[k] + w * cb[k];
        let total = (1.0 - w) * self.row_total(i) + w * self.row_total(j);
        let x = u * total;
        let finite = cum(self.k_max - 1);
        if x < finite {
            let (mut lo, mut hi) = (0usize, self.k_max - 1);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if cum(mid) <= x {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            return Ok(lo as u64 + 1);
        }
        let g = total - x;
        if !(g > 0.0) {
            return Err(Error::NonConservative { total, tol: 0.0 });
        }
        let ta = self.tails[i].as_ref();
        let tb = self.tails[j].as_ref();
        let first = self.k_max as u64 + 1;
        let surv = |k: u64| (1.0 - w) * ta.map_or(0.0, |t| t.survival(k)) + w * tb.map_or(0.0, |t| t.survival(k));
        match (ta, tb) {
            (Some(a), Some(b)) if a.decay == 0.0 && b.decay == 0.0 => {
                Ok(TailModel::power_law(self.k_max, (1.0 - w) * a.amplitude + w * b.amplitude).invert(g))
            }
            _ => Ok(invert_survival(first, g, surv)),
        }
    }

    /// Largest conservation defect over the grid.
    pub fn max_defect(&self) -> f64 {
        self.diagnostics.defect.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Largest conservation defect over grid points in `[a, b]`.
    pub fn max_defect_between(&self, a: f64, b: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.diagnostics.defect)
            .filter(|(t, _)| **t >= a && **t <= b)
            .fold(0.0, |m, (_, d)| m.max(d.abs()))
    }

    pub fn save(&self, json_path: &Path) -> Result<()> {
        self.save_with_meta(json_path, None)
    }

    /// Like [`Environment::save`], storing `meta` verbatim in the JSON document.
    pub fn save_with_meta(&self, json_path: &Path, meta: Option<serde_json::Value>) -> Result<()> {
        let sidecar = sidecar_path(json_path);
        let mut doc = EnvironmentDoc::from_env(self, &sidecar);
        doc.meta = meta;
        let f = BufWriter::new(fs::File::create(json_path)?);
        serde_json::to_writer(f, &doc)?;
        self.write_sidecar(&sidecar)
    }

    pub fn load(json_path: &Path) -> Result<Self> {
        let f = BufReader::new(fs::File::open(json_path)?);
        let doc: EnvironmentDoc = serde_json::from_reader(f)?;
        let sidecar = json_path.with_file_name(&doc.sidecar);
        let (k, t, steps, v, phi) = read_sidecar(&sidecar)?;
        if k != doc.k_max || steps != doc.times.len() || t != doc.times.last().copied().unwrap_or(f64::NAN) {
            return Err(Error::SchemaMismatch(format!(
                "sidecar header (K={k}, T={t}, steps={steps}) disagrees with {}",
                json_path.display()
            )));
        }
        if phi != doc.phi {
            return Err(Error::SchemaMismatch("sidecar burn rates disagree with JSON".into()));
        }
        if doc.tails.len() != steps || doc.phi_integral.len() != steps {
            return Err(Error::SchemaMismatch("per-row arrays have inconsistent lengths".into()));
        }
        Ok(Environment::from_rows(
            doc.closure,
            doc.k_max,
            doc.t_gel,
            doc.init,
            doc.times,
            v,
            doc.phi,
            doc.phi_integral,
            doc.tails,
            doc.diagnostics,
        ))
    }

    /// Flat little-endian f64 file: `K, T, steps`, then the rows of `v`, then `φ`.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        for x in [self.k_max as f64, self.horizon(), self.rows() as f64].iter().chain(&self.v).chain(&self.phi) {
            f.write_all(&x.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

pub fn sidecar_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("bin")
}

type Sidecar = (usize, f64, usize, Vec<f64>, Vec<f64>);

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 || bytes.len() < 24 {
        return Err(Error::SchemaMismatch(format!("{} is not a float array", path.display())));
    }
    let xs: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (k, t, steps) = (xs[0], xs[1], xs[2]);
    if !(k >= 1.0 && steps >= 1.0 && k.fract() == 0.0 && steps.fract() == 0.0) {
        return Err(Error::SchemaMismatch(format!("bad sidecar header in {}", path.display())));
    }
    let (k, steps) = (k as usize, steps as usize);
    if xs.len() != 3 + k * steps + steps {
        return Err(Error::SchemaMismatch(format!("sidecar {} has wrong length", path.display())));
    }
    let v = xs[3..3 + k * steps].to_vec();
    let phi = xs[3 + k * steps..].to_vec();
    Ok((k, t, steps, v, phi))
}

/// Sizes kept in the JSON preview of each row.
pub fn decimated_sizes(k_max: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = (1..=k_max.min(32)).collect();
    let mut s = 32usize;
    while s < k_max {
        s = (s as f64 * 1.25).ceil() as usize;
        sizes.push(s.min(k_max));
    }
    sizes.dedup();
    sizes
}

#[derive(Serialize, Deserialize)]
struct EnvironmentDoc {
    closure: Closure,
    k_max: usize,
    t_gel: f64,
    init: MassDistribution,
    times: Vec<f64>,
    phi: Vec<f64>,
    phi_integral: Vec<f64>,
    tails: Vec<Option<TailModel>>,
    decimated_sizes: Vec<usize>,
    decimated_masses: Vec<Vec<f64>>,
    diagnostics: SolveDiagnostics,
    sidecar: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

impl EnvironmentDoc {
    fn from_env(env: &Environment, sidecar: &Path) -> Self {
        let sizes = decimated_sizes(env.k_max);
        let decimated_masses = (0..env.rows()).map(|i| sizes.iter().map(|&k| env.row(i)[k - 1]).collect()).collect();
        EnvironmentDoc {
            closure: env.closure,
            k_max: env.k_max,
            t_gel: env.t_gel,
            init: env.init.clone(),
            times: env.times.clone(),
            phi: env.phi.clone(),
            phi_integral: env.phi_integral.clone(),
            tails: env.tails.clone(),
            decimated_sizes: sizes,
            decimated_masses,
            diagnostics: env.diagnostics.clone(),
            sidecar: sidecar.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            meta: None,
        }
    }
}
