//! The limiting medium: coagulation with multiplicative kernel, with and
//! without the burn-rate control that keeps the total mass at one.

mod conv;
mod environment;
mod solver;

pub use conv::{gain_direct, Convolver, FFT_CROSSOVER};
pub use environment::{decimated_sizes, sidecar_path, Closure, Environment, SolveDiagnostics};
pub use solver::{fit_tail, phi_estimates, solve, SolverConfig, MAX_OUTPUT_STEP, NEG_CLAMP, TAIL_FLOOR};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mass::MassDistribution;

/// Closed-form coagulation solution from monodisperse data:
/// `v_k(t) = k^{k-1}/k! e^{-kt} t^{k-1}`.
pub fn borel_vk(k: u64, t: f64) -> f64 {
    assert!(k >= 1 && t >= 0.0);
    if t == 0.0 {
        return if k == 1 { 1.0 } else { 0.0 };
    }
    if k <= 50 {
        // k^{k-1}/k! = prod_{i=1}^{k-1} k/(i+1)
        let kf = k as f64;
        let mut coef = 1.0;
        for i in 1..k {
            coef *= kf / (i + 1) as f64;
        }
        return coef * (-kf * t).exp() * t.powi(k as i32 - 1);
    }
    let kf = k as f64;
    // ln(k^k / k!) by Stirling with four correction terms
    let inv = 1.0 / kf;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    // k(1 - t + ln t), accurate near t = 1
    let theta = (t - 1.0).ln_1p() - (t - 1.0);
    let log_v = kf * theta - t.ln() - 0.5 * (2.0 * std::f64::consts::PI * kf).ln() - kf.ln() - series;
    log_v.exp()
}

/// `T_gel = 1 / Σ l v_l(0)`.
pub fn gelation_time(init: &MassDistribution) -> Result<f64> {
    let m1 = init.first_moment();
    if m1 == 0.0 {
        return Err(Error::ZeroMoment);
    }
    if !m1.is_finite() {
        return Err(Error::InvalidDistribution("initial first moment is infinite".into()));
    }
    Ok(1.0 / m1)
}

pub fn solve_smoluchowski(init: &MassDistribution, cfg: &SolverConfig) -> Result<Environment> {
    solve(init, cfg, Closure::Smoluchowski)
}

pub fn solve_cffe(init: &MassDistribution, cfg: &SolverConfig) -> Result<Environment> {
    solve(init, cfg, Closure::CriticalFire)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSize {
    Finite(f64),
    Infinite,
}

/// `Σ k v_k(t)`, including the tail model; infinite from gelation on.
pub fn mean_cluster_size(env: &Environment, t: f64) -> MeanSize {
    if t >= env.t_gel {
        return MeanSize::Infinite;
    }
    let m = env.dist_at(t).first_moment();
    if m.is_finite() {
        MeanSize::Finite(m)
    } else {
        MeanSize::Infinite
    }
}

/// `X_t(z)` for the normalized distribution at `t`.
pub fn eval_x(env: &Environment, t: f64, z: f64) -> f64 {
    env.eval_x(t, z)
}

/// Characteristic of the pure coagulation flow: `w e^{t (1 - X_0(w))}`.
pub fn smoluchowski_char(w: f64, t: f64, init: &MassDistribution) -> f64 {
    w * (t * (1.0 - init.generating(w))).exp()
}

/// `|Σ v_k(t)/k - Σ v_k(0)/k - ∫_0^t φ + t/2|`, tail included.
pub fn burn_rate_integral_check(env: &Environment, t: f64) -> f64 {
    let now = env.dist_at(t).inverse_moment();
    let start = env.dist(0).inverse_moment();
    (now - start - env.phi_integral_at(t) + 0.5 * t).abs()
}

/// `(1/(t - T_gel)) ∫_{T_gel}^t φ`.
pub fn average_burn_rate(env: &Environment, t: f64) -> f64 {
    if t <= env.t_gel {
        return 0.0;
    }
    (env.phi_integral_at(t) - env.phi_integral_at(env.t_gel)) / (t - env.t_gel)
}

/// `Σ_{l>=k} v_l(t)`, with sizes beyond `K` taken from the tail model.
pub fn tail_mass_from(env: &Environment, t: f64, k: usize) -> f64 {
    let d = env.dist_at(t);
    let finite: f64 = d.masses.iter().skip(k.saturating_sub(1)).sum();
    finite + d.tail_mass()
}

/// Least-squares fit of `log Σ_{l>=k} v_l = log c + slope log k` over sizes
/// spaced geometrically in `[k_lo, k_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub amplitude: f64,
}

pub fn fit_tail_law(env: &Environment, t: f64, k_lo: usize, k_hi: usize) -> TailFit {
    let d = env.dist_at(t);
    let tail = d.tail_mass();
    let mut suffix = vec![0.0; d.masses.len() + 2];
    for k in (1..=d.masses.len()).rev() {
        suffix[k] = suffix[k + 1] + d.masses[k - 1];
    }
    let mut pts = Vec::new();
    let mut k = k_lo as f64;
    while k <= k_hi as f64 {
        let ki = k.round() as usize;
        pts.push(((ki as f64).ln(), (suffix[ki] + tail).ln()));
        k *= 1.05;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    TailFit { slope, amplitude: (my - slope * mx).exp() }
}
