//! Cluster-size mass distributions, their power-law tails, and paintbox
//! (inverse-CDF) sampling.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Conservation tolerance for exactly specified distributions.
pub const EXACT_TOL: f64 = 1e-9;

/// `∫_x^∞ (c/2) y^{-3/2} e^{-q y} dy`, evaluated without cancellation for large `q x`.
pub(crate) fn tail_integral(c: f64, q: f64, x: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    if q <= 0.0 {
        return c / x.sqrt();
    }
    let y = (q * x).sqrt();
    let lead = (-q * x).exp() / x.sqrt();
    if y > 10.0 {
        // 1 - sqrt(pi) y e^{y^2} erfc(y), asymptotic series
        let inv = 0.5 / (y * y);
        let mut term = inv;
        let mut sum = 0.0;
        for n in 1..=8 {
            sum += term;
            term *= -((2 * n + 1) as f64) * inv;
        }
        c * lead * sum
    } else {
        c * (lead - (PI * q).sqrt() * erfc(y))
    }
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Tail of a size distribution beyond `cutoff`, with density
/// `(c/2) k^{-3/2} e^{-decay k}`. A zero decay gives the pure power law
/// `P(L >= k) ≈ c k^{-1/2}`.
///
/// Bucket `k` receives the density integrated over `[k - 1/2, k + 1/2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub cutoff: usize,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub decay: f64,
}

impl TailModel {
    pub fn power_law(cutoff: usize, amplitude: f64) -> Self {
        TailModel { cutoff, amplitude, decay: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidDistribution(format!("tail amplitude {}", self.amplitude)));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::InvalidDistribution(format!("tail decay {}", self.decay)));
        }
        Ok(())
    }

    fn start(&self) -> f64 {
        self.cutoff as f64 + 0.5
    }

    /// `P(L >= k)` restricted to the tail, for `k > cutoff`.
    pub fn survival(&self, k: u64) -> f64 {
        debug_assert!(k as usize > self.cutoff);
        tail_integral(self.amplitude, self.decay, k as f64 - 0.5)
    }

    /// Total mass carried by the tail.
    pub fn mass(&self) -> f64 {
        tail_integral(self.amplitude, self.decay, self.start())
    }

    /// Density of the continuous tail model at size `k`.
    pub fn density(&self, k: f64) -> f64 {
        0.5 * self.amplitude * k.powf(-1.5) * (-self.decay * k).exp()
    }

    /// Tail contribution to `Σ k v_k`; infinite for an undamped power law.
    pub fn first_moment(&self) -> f64 {
        if self.amplitude == 0.0 {
            0.0
        } else if self.decay <= 0.0 {
            f64::INFINITY
        } else {
            0.5 * self.amplitude * (PI / self.decay).sqrt() * erfc((self.decay * self.start()).sqrt())
        }
    }

    /// Tail contribution to `Σ v_k / k`.
    pub fn inverse_moment(&self) -> f64 {
        let a = self.start();
        self.amplitude / 3.0 * a.powf(-1.5) * (-self.decay * a).exp() - 2.0 * self.decay / 3.0 * self.mass()
    }

    /// Tail contribution to `Σ z^k v_k`.
    pub fn generating(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        tail_integral(self.amplitude, self.decay - z.ln(), self.start())
    }

    /// Tail contribution to `Σ (1 - z^k) v_k` with `z = 1 - w2`.
    pub fn generating_complement(&self, w2: f64) -> f64 {
        if self.amplitude == 0.0 || w2 <= 0.0 {
            return 0.0;
        }
        if w2 >= 1.0 {
            return self.mass();
        }
        let s = -(-w2).ln_1p();
        let a = self.start();
        if self.decay <= 0.0 {
            self.amplitude * (-(-s * a).exp_m1() / a.sqrt() + (PI * s).sqrt() * erfc((s * a).sqrt()))
        } else {
            self.mass() - tail_integral(self.amplitude, self.decay + s, a)
        }
    }

    /// Smallest `k > cutoff` with `P(L >= k + 1) < g`.
    pub fn invert(&self, g: f64) -> u64 {
        let first = self.cutoff as u64 + 1;
        if self.decay <= 0.0 {
            let x = (self.amplitude / g).powi(2) - 0.5;
            if !(x < 9.0e18) {
                return u64::MAX;
            }
            return (x.floor() as u64 + 1).max(first);
        }
        invert_survival(first, g, |k| self.survival(k))
    }
}

/// Smallest `k >= first` with `survival(k + 1) < g`, for a nonincreasing
/// `survival`. Saturates at `u64::MAX`.
pub fn invert_survival(first: u64, g: f64, survival: impl Fn(u64) -> f64) -> u64 {
    let below = |k: u64| survival(k.saturating_add(1)) < g;
    if below(first) {
        return first;
    }
    let mut lo = first;
    let mut hi = first.saturating_mul(2);
    while !below(hi) {
        if hi == u64::MAX {
            return u64::MAX;
        }
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Mass fractions `v_1, ..., v_K` plus an optional tail beyond `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassDistribution {
    pub as_of: f64,
    pub masses: Vec<f64>,
    pub tail: Option<TailModel>,
}

impl MassDistribution {
    pub fn new(as_of: f64, masses: Vec<f64>, tail: Option<TailModel>) -> Result<Self> {
        let dist = MassDistribution { as_of, masses, tail };
        dist.validate()?;
        Ok(dist)
    }

    /// Finite distribution at time 0.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        Self::new(0.0, masses, None)
    }

    /// All mass on clusters of size `k`.
    pub fn point_mass(k: usize) -> Self {
        assert!(k >= 1);
        let mut masses = vec![0.0; k];
        masses[k - 1] = 1.0;
        MassDistribution { as_of: 0.0, masses, tail: None }
    }

    pub fn monodisperse() -> Self {
        Self::point_mass(1)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((i, m)) = self.masses.iter().enumerate().find(|(_, m)| !(**m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidDistribution(format!("mass {m} at size {}", i + 1)));
        }
        if let Some(tail) = &self.tail {
            tail.validate()?;
            if tail.cutoff < self.masses.len() {
                return Err(Error::InvalidDistribution(format!(
                    "tail cutoff {} inside finite support {}",
                    tail.cutoff,
                    self.masses.len()
                )));
            }
        }
        let total = self.total();
        if total > 1.0 + EXACT_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {total} exceeds 1")));
        }
        Ok(())
    }

    /// Mass of size `k` (1-based); zero outside the finite support.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.masses.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn finite_total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail.as_ref().map_or(0.0, TailModel::mass)
    }

    pub fn total(&self) -> f64 {
        self.finite_total() + self.tail_mass()
    }

    pub fn is_conservative(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol
    }

    pub fn check_conservative(&self, tol: f64) -> Result<()> {
        let total = self.total();
        if (total - 1.0).abs() <= tol {
            Ok(())
        } else {
            Err(Error::NonConservative { total, tol })
        }
    }

    /// `Σ k v_k`, including the tail.
    pub fn first_moment(&self) -> f64 {
        let finite: f64 = self.masses.iter().enumerate().map(|(i, m)| (i + 1) as f64 * m).sum();
        finite + self.tail.as_ref().map_or(0.0, TailModel::first_moment)
    }

    /// `Σ v_k / k`, including the tail.
    pub fn inverse_moment(&self) -> f64 {
        let finite: f64 = self.masses.iter().enumerate().map(|(i, m)| m / (i + 1) as f64).sum();
        finite + self.tail.as_ref().map_or(0.0, TailModel::inverse_moment)
    }

    /// `Σ z^k v_k`, including the tail.
    pub fn generating(&self, z: f64) -> f64 {
        let mut zk = 1.0;
        let mut acc = 0.0;
        for m in &self.masses {
            zk *= z;
            acc += zk * m;
        }
        acc + self.tail.as_ref().map_or(0.0, |t| t.generating(z))
    }

    /// `Σ (1 - z^k) v_k` with `z = 1 - w2`, without cancellation near `z = 1`.
    pub fn generating_complement(&self, w2: f64) -> f64 {
        let z = 1.0 - w2;
        let mut zk = 1.0;
        let mut one_minus = 0.0;
        let mut acc = 0.0;
        for m in &self.masses {
            one_minus += zk * w2;
            zk *= z;
            acc += one_minus * m;
        }
        acc + self.tail.as_ref().map_or(0.0, |t| t.generating_complement(w2))
    }

    /// Paintbox draw: `min{k : u < Σ_{l<=k} v_l}`, continuing into the tail.
    pub fn sample(&self, u: f64) -> Result<u64> {
        let mut acc = 0.0;
        for (i, m) in self.masses.iter().enumerate() {
            acc += m;
            if u < acc {
                return Ok(i as u64 + 1);
            }
        }
        sample_tail(self.tail.as_ref(), acc, u)
    }
}

fn sample_tail(tail: Option<&TailModel>, finite_total: f64, x: f64) -> Result<u64> {
    let Some(tail) = tail else {
        return Err(Error::NonConservative { total: finite_total, tol: EXACT_TOL });
    };
    let mass = tail.mass();
    let g = mass - (x - finite_total);
    if g > 0.0 {
        Ok(tail.invert(g))
    } else {
        Err(Error::NonConservative { total: finite_total + mass, tol: EXACT_TOL })
    }
}

/// Inverse-CDF sampling of a cluster size; see [`MassDistribution::sample`].
pub fn sample_size(dist: &MassDistribution, u: f64) -> Result<u64> {
    dist.sample(u)
}

/// Precomputed cumulative sums for repeated paintbox draws in O(log K).
#[derive(Clone, Debug)]
pub struct Paintbox {
    cumulative: Vec<f64>,
    tail: Option<TailModel>,
    total: f64,
}

impl Paintbox {
    pub fn new(dist: &MassDistribution) -> Self {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = dist
            .masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        let total = acc + dist.tail_mass();
        Paintbox { cumulative, tail: dist.tail.clone(), total }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Draw with `u` in `[0, 1)` against the raw (unnormalized) masses.
    pub fn sample(&self, u: f64) -> Result<u64> {
        self.sample_at(u)
    }

    /// Draw from the distribution renormalized to total mass one.
    pub fn sample_normalized(&self, u: f64) -> Result<u64> {
        self.sample_at(u * self.total)
    }

    fn sample_at(&self, x: f64) -> Result<u64> {
        let idx = self.cumulative.partition_point(|&c| c <= x);
        if idx < self.cumulative.len() {
            return Ok(idx as u64 + 1);
        }
        let finite = self.cumulative.last().copied().unwrap_or(0.0);
        sample_tail(self.tail.as_ref(), finite, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> MassDistribution {
        MassDistribution::from_masses(vec![0.5, 0.25, 0.25]).unwrap()
    }

    #[test]
    fn sample_examples() {
        assert_eq!(sample_size(&three(), 0.3).unwrap(), 1);
        assert_eq!(sample_size(&three(), 0.6).unwrap(), 2);
        assert_eq!(sample_size(&MassDistribution::point_mass(1), 0.999).unwrap(), 1);
    }

    #[test]
    fn ties_resolve_upward() {
        assert_eq!(three().sample(0.5).unwrap(), 2);
        assert_eq!(Paintbox::new(&three()).sample(0.5).unwrap(), 2);
        assert_eq!(three().sample(0.0).unwrap(), 1);
    }

    #[test]
    fn deficient_mass_is_reported() {
        let d = MassDistribution::from_masses(vec![0.5, 0.25]).unwrap();
        assert!(matches!(d.sample(0.9), Err(Error::NonConservative { .. })));
        assert!(matches!(Paintbox::new(&d).sample(0.9), Err(Error::NonConservative { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(MassDistribution::from_masses(vec![0.7, 0.7]).is_err());
        assert!(MassDistribution::from_masses(vec![-0.1, 1.1]).is_err());
        let tail = TailModel::power_law(1, 0.1);
        assert!(MassDistribution::new(0.0, vec![0.5, 0.4], Some(tail)).is_err());
    }

    #[test]
    fn json_shape() {
        let d = MassDistribution::new(0.25, vec![0.9], Some(TailModel::power_law(1, 0.1))).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"as_of":0.25,"masses":[0.9],"tail":{"cutoff":1,"amplitude":0.1}}"#);
        let back: MassDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        let none = serde_json::to_string(&three()).unwrap();
        assert!(none.ends_with(r#""tail":null}"#));
    }

    #[test]
    fn tail_integral_matches_quadrature() {
        // midpoint quadrature of (c/2) y^{-3/2} e^{-qy} on [x, x + L] plus an analytic remainder
        for &(c, q, x) in &[(0.8f64, 0.0f64, 100.5f64), (0.8, 1e-4, 100.5), (0.5, 0.02, 40.5), (1.0, 0.3, 200.5)] {
            let h = 1e-3;
            let mut sum = 0.0;
            let mut y = x + 0.5 * h;
            let end = x + 2.0e4;
            while y < end {
                sum += 0.5 * c * y.powf(-1.5) * (-q * y).exp() * h;
                y += h;
            }
            sum += tail_integral(c, q, end);
            let got = tail_integral(c, q, x);
            assert!((got - sum).abs() < 1e-9 * got.max(1e-30) + 1e-14, "{c} {q} {x}: {got} vs {sum}");
        }
    }

    #[test]
    fn tail_integral_series_branch_is_continuous() {
        let c = 0.7;
        let x = 50.0;
        let q_edge = 100.0 / x;
        let below = tail_integral(c, q_edge * (1.0 - 1e-9), x);
        let above = tail_integral(c, q_edge * (1.0 + 1e-9), x);
        assert!((below / above - 1.0).abs() < 1e-6);
        assert!(tail_integral(c, 10.0, x) >= 0.0);
    }

    #[test]
    fn power_law_tail_moments() {
        let t = TailModel::power_law(99, 0.8);
        assert!((t.mass() - 0.8 / 99.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.first_moment(), f64::INFINITY);
        assert!((t.inverse_moment() - 0.8 / 3.0 * 99.5f64.powf(-1.5)).abs() < 1e-15);
        assert!((t.generating(1.0) - t.mass()).abs() < 1e-15);
        assert!((t.generating_complement(0.01) - (t.mass() - t.generating(0.99))).abs() < 1e-13);
    }

    #[test]
    fn damped_tail_moments_match_sums() {
        let t = TailModel { cutoff: 50, amplitude: 0.7, decay: 0.01 };
        let (mut m0, mut m1, mut minv, mut gz) = (0.0, 0.0, 0.0, 0.0);
        let z: f64 = 0.995;
        for k in 51..200_000u64 {
            let p = t.survival(k) - t.survival(k + 1);
            m0 += p;
            m1 += k as f64 * p;
            minv += p / k as f64;
            gz += z.powi(k as i32) * p;
        }
        assert!((m0 - t.mass()).abs() < 1e-12);
        assert!((m1 / t.first_moment() - 1.0).abs() < 1e-4);
        assert!((minv / t.inverse_moment() - 1.0).abs() < 1e-3);
        assert!((gz / t.generating(z) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn tail_inverse_is_consistent() {
        for t in [TailModel::power_law(10, 0.8), TailModel { cutoff: 10, amplitude: 0.8, decay: 0.003 }] {
            let mass = t.mass();
            for i in 1..200 {
                let g = mass * i as f64 / 200.0;
                let k = t.invert(g);
                assert!(k >= 11);
                assert!(t.survival(k + 1) < g);
                if k > 11 {
                    assert!(t.survival(k) >= g);
                }
            }
        }
    }

    #[test]
    fn sampling_with_tail_reaches_large_sizes() {
        let tail = TailModel::power_law(2, 0.2);
        let mass = tail.mass();
        let d = MassDistribution::new(0.0, vec![1.0 - mass - 0.1, 0.1], Some(tail)).unwrap();
        assert!(d.is_conservative(1e-12));
        let pb = Paintbox::new(&d);
        assert_eq!(pb.sample(0.5).unwrap(), 1);
        assert!(pb.sample(0.999_999).unwrap() > 1000);
        assert_eq!(pb.sample(1.0 - mass + 1e-12).unwrap(), 3);
    }
}
