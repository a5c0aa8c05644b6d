//! Exponential time differencing (fourth order) for the truncated
//! coagulation system, with step-doubling error control.
//!
//! The linear loss `-k v_k` is integrated exactly, so the step is limited by
//! accuracy in the coupling terms rather than by the stiffness of large sizes.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::conv::{Convolver, FFT_CROSSOVER};
use super::environment::{Closure, Environment, SolveDiagnostics};
use super::gelation_time;
use crate::error::{Error, Result};
use crate::mass::{MassDistribution, TailModel, EXACT_TOL};

/// Values in `(-NEG_CLAMP, 0)` are treated as roundoff and set to zero.
pub const NEG_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Truncation size `K`.
    pub k_max: usize,
    pub horizon: f64,
    /// Nominal step before gelation and after the refined window.
    pub step_pre: f64,
    /// Nominal step on `[T_gel, T_gel + fine_window]`.
    pub step_post: f64,
    pub fine_window: f64,
    /// Spacing of stored grid points.
    pub output_step: f64,
    /// Steps are capped at `stability / K`.
    pub stability: f64,
    /// Step-doubling tolerance on the max-norm of the difference.
    pub tol: f64,
    pub max_halvings: u32,
    pub fft_crossover: usize,
    /// Allowed gap between burn-rate estimates from `(K, K/2)` and `(K/2, K/4)`,
    /// relative to `max(φ, 0.1)`, once the post-gelation transient has passed.
    pub phi_consistency: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k_max: 4096,
            horizon: 3.0,
            step_pre: 1e-3,
            step_post: 5e-4,
            fine_window: 0.5,
            output_step: 5e-3,
            stability: 2.0,
            tol: 1e-9,
            max_halvings: 8,
            fft_crossover: FFT_CROSSOVER,
            phi_consistency: 0.1,
        }
    }
}

/// Smallest window mean treated as a resolved tail.
pub const TAIL_FLOOR: f64 = 1e-13;
/// Largest output spacing for which linear interpolation in time is trusted.
pub const MAX_OUTPUT_STEP: f64 = 0.05;

impl SolverConfig {
    pub fn new(k_max: usize, horizon: f64) -> Self {
        SolverConfig { k_max, horizon, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max < 4 {
            return Err(Error::InvalidConfig(format!("K = {} (need at least 4)", self.k_max)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon {}", self.horizon)));
        }
        for (name, h) in [("step_pre", self.step_pre), ("step_post", self.step_post), ("output_step", self.output_step)]
        {
            if !(h > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} = {h}")));
            }
        }
        if self.output_step > MAX_OUTPUT_STEP {
            return Err(Error::GridTooCoarse(format!("output step {} exceeds {MAX_OUTPUT_STEP}", self.output_step)));
        }
        if !(self.tol > 0.0 && self.stability > 0.0) {
            return Err(Error::InvalidConfig("tolerance and stability factor must be positive".into()));
        }
        Ok(())
    }

    fn nominal_step(&self, t: f64, t_gel: f64, post: bool) -> f64 {
        let h = if post && t < t_gel + self.fine_window { self.step_post } else { self.step_pre };
        h.min(self.stability / self.k_max as f64)
    }
}

/// `φ_1, φ_2, φ_3` of the exponential integrator at `z`.
fn phi_functions(z: f64) -> (f64, f64, f64) {
    if z.abs() < 1.0 {
        let (mut p1, mut p2, mut p3) = (0.0, 0.0, 0.0);
        // z^n / (n + j)! accumulated term by term
        let mut t1 = 1.0;
        let mut t2 = 0.5;
        let mut t3 = 1.0 / 6.0;
        for n in 0..30 {
            p1 += t1;
            p2 += t2;
            p3 += t3;
            let n = n as f64;
            t1 *= z / (n + 2.0);
            t2 *= z / (n + 3.0);
            t3 *= z / (n + 4.0);
        }
        (p1, p2, p3)
    } else {
        let ez = z.exp();
        let p1 = (ez - 1.0) / z;
        let p2 = (ez - 1.0 - z) / (z * z);
        let p3 = (ez - 1.0 - z - 0.5 * z * z) / (z * z * z);
        (p1, p2, p3)
    }
}

/// ETDRK4 weights for `L = -k`, `k = 1..K`, plus a trailing `L = 0` entry
/// for the accumulated burn.
struct Coeffs {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl Coeffs {
    fn new(h: f64, k_max: usize) -> Self {
        let len = k_max + 1;
        let mut co = Coeffs {
            e: Vec::with_capacity(len),
            e2: Vec::with_capacity(len),
            q: Vec::with_capacity(len),
            f1: Vec::with_capacity(len),
            f2: Vec::with_capacity(len),
            f3: Vec::with_capacity(len),
        };
        for idx in 0..len {
            let rate = if idx < k_max { (idx + 1) as f64 } else { 0.0 };
            let c = -rate * h;
            let (p1, p2, p3) = phi_functions(c);
            let (half, _, _) = phi_functions(0.5 * c);
            co.e.push(c.exp());
            co.e2.push((0.5 * c).exp());
            co.q.push(0.5 * h * half);
            co.f1.push(h * (p1 - 3.0 * p2 + 4.0 * p3));
            co.f2.push(h * (p2 - 2.0 * p3));
            co.f3.push(h * (4.0 * p3 - p2));
        }
        co
    }
}

/// Mass flux `Σ_{k<=m} (k v_k - gain_k)` out of sizes `1..=m` for `m = K, K/2, K/4`.
fn fluxes(v: &[f64], gain: &[f64]) -> [f64; 3] {
    let k_max = v.len();
    let marks = [k_max, k_max / 2, k_max / 4];
    let mut out = [0.0; 3];
    let mut acc = 0.0;
    for k in 1..=k_max {
        acc += k as f64 * v[k - 1] - gain[k - 1];
        for (o, &m) in out.iter_mut().zip(&marks) {
            if k == m {
                *o = acc;
            }
        }
    }
    out
}

/// Eliminates the `m^{-1/2}` truncation term between two flux values.
fn richardson(f_hi: f64, m_hi: usize, f_lo: f64, m_lo: usize) -> f64 {
    let (a, b) = ((m_hi as f64).sqrt(), (m_lo as f64).sqrt());
    (a * f_hi - b * f_lo) / (a - b)
}

/// Burn-rate estimates from `(K, K/2)` and from `(K/2, K/4)`.
pub fn phi_estimates(v: &[f64], gain: &[f64]) -> (f64, f64) {
    let k = v.len();
    let [f1, f2, f4] = fluxes(v, gain);
    (richardson(f1, k, f2, k / 2), richardson(f2, k / 2, f4, k / 4))
}

/// Cutoff power law `(c/2) k^{-3/2} e^{-r k}` fitted to bucket averages
/// around `K/4` and `K/2`. Averaging over a few buckets removes parity
/// effects of lattice-supported initial data.
pub fn fit_tail(v: &[f64]) -> Option<TailModel> {
    let k_max = v.len();
    let (a, ma) = tail_window(v, k_max / 4);
    let (b, mb) = tail_window(v, k_max / 2);
    // Below this level the buckets are convolution round-off, not signal.
    if !(ma > TAIL_FLOOR && mb > TAIL_FLOOR) {
        return None;
    }
    let decay = ((ma.ln() + 1.5 * a.ln() - mb.ln() - 1.5 * b.ln()) / (b - a)).max(0.0);
    let amplitude = 2.0 * mb * b.powf(1.5) * (decay * b).exp();
    Some(TailModel { cutoff: k_max, amplitude, decay })
}

/// Centre and mean of the bucket window ending at `end`.
fn tail_window(v: &[f64], end: usize) -> (f64, f64) {
    let width = (v.len() / 8).clamp(1, 12);
    let lo = end + 1 - width;
    let mean = v[lo - 1..end].iter().sum::<f64>() / width as f64;
    (0.5 * (lo + end) as f64, mean)
}

/// Amplitude of `c/2 k^{-3/2}` matched to the window around `K/2`.
fn critical_amplitude(v: &[f64]) -> f64 {
    let (b, mb) = tail_window(v, v.len() / 2);
    2.0 * mb * b.powf(1.5)
}

struct Integrator {
    k_max: usize,
    conv: Convolver,
    coeffs: HashMap<u64, Arc<Coeffs>>,
    post_gel: bool,
    gain: Vec<f64>,
    nu: Vec<f64>,
    na: Vec<f64>,
    nb: Vec<f64>,
    nc: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    full: Vec<f64>,
    mid: Vec<f64>,
    halvings: u64,
    min_step: f64,
}

impl Integrator {
    fn new(k_max: usize, crossover: usize) -> Self {
        let n = k_max + 1;
        Integrator {
            k_max,
            conv: Convolver::with_crossover(k_max, crossover),
            coeffs: HashMap::new(),
            post_gel: false,
            gain: vec![0.0; k_max],
            nu: vec![0.0; n],
            na: vec![0.0; n],
            nb: vec![0.0; n],
            nc: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
            full: vec![0.0; n],
            mid: vec![0.0; n],
            halvings: 0,
            min_step: f64::INFINITY,
        }
    }

    fn coeffs(&mut self, h: f64) -> Arc<Coeffs> {
        if self.coeffs.len() > 64 {
            self.coeffs.clear();
        }
        let k_max = self.k_max;
        self.coeffs.entry(h.to_bits()).or_insert_with(|| Arc::new(Coeffs::new(h, k_max))).clone()
    }

    /// Burn rate fed back at state `v`.
    fn phi(&mut self, v: &[f64]) -> (f64, f64) {
        self.conv.gain(v, &mut self.gain);
        phi_estimates(v, &self.gain)
    }

    /// Nonlinear part: gain for `k >= 2`, burn re-entry at `k = 1`, and `dΦ/dt`.
    fn rhs(conv: &mut Convolver, gain: &mut [f64], post_gel: bool, u: &[f64], out: &mut [f64]) {
        let k_max = gain.len();
        let v = &u[..k_max];
        conv.gain(v, gain);
        let phi = if post_gel { phi_estimates(v, gain).0 } else { 0.0 };
        out[..k_max].copy_from_slice(gain);
        out[0] = phi;
        out[k_max] = phi;
    }

    fn step(&mut self, u: &[f64], h: f64, out: &mut [f64]) {
        let co = self.coeffs(h);
        let n = u.len();
        let (conv, gain, post) = (&mut self.conv, &mut self.gain, self.post_gel);
        Self::rhs(conv, gain, post, u, &mut self.nu);
        for i in 0..n {
            self.a[i] = co.e2[i] * u[i] + co.q[i] * self.nu[i];
        }
        Self::rhs(conv, gain, post, &self.a, &mut self.na);
        for i in 0..n {
            self.b[i] = co.e2[i] * u[i] + co.q[i] * self.na[i];
        }
        Self::rhs(conv, gain, post, &self.b, &mut self.nb);
        for i in 0..n {
            self.c[i] = co.e2[i] * self.a[i] + co.q[i] * (2.0 * self.nb[i] - self.nu[i]);
        }
        Self::rhs(conv, gain, post, &self.c, &mut self.nc);
        for i in 0..n {
            out[i] = co.e[i] * u[i]
                + co.f1[i] * self.nu[i]
                + 2.0 * co.f2[i] * (self.na[i] + self.nb[i])
                + co.f3[i] * self.nc[i];
        }
    }

    /// Advance `u` by `h`, comparing one full step with two half steps and
    /// splitting the interval when they disagree by more than `tol`.
    fn advance(&mut self, u: &mut Vec<f64>, t: f64, h: f64, tol: f64, depth: u32, max_depth: u32) -> Result<()> {
        let mut full = std::mem::take(&mut self.full);
        let mut mid = std::mem::take(&mut self.mid);
        self.step(u, h, &mut full);
        self.step(u, 0.5 * h, &mut mid);
        let mut fine = vec![0.0; u.len()];
        self.step(&mid, 0.5 * h, &mut fine);
        let err = full[..self.k_max].iter().zip(&fine).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        self.full = full;
        self.mid = mid;
        if err <= tol {
            *u = fine;
            self.min_step = self.min_step.min(h);
            return Ok(());
        }
        if depth >= max_depth {
            return Err(Error::StepRejected { t, err, tol });
        }
        self.halvings += 1;
        self.advance(u, t, 0.5 * h, tol, depth + 1, max_depth)?;
        self.advance(u, t + 0.5 * h, 0.5 * h, tol, depth + 1, max_depth)
    }
}

/// Clamp roundoff negatives; fail on anything larger.
fn clamp_negative(v: &mut [f64], t: f64) -> Result<()> {
    for (i, x) in v.iter_mut().enumerate() {
        if *x < 0.0 {
            if *x < -NEG_CLAMP {
                return Err(Error::NegativeMass { t, k: i + 1, value: *x });
            }
            *x = 0.0;
        }
    }
    Ok(())
}

/// Stored grid: regular points, the gelation time, and the horizon. Regular
/// points too close to the gelation time are dropped.
fn output_grid(horizon: f64, step: f64, t_gel: f64) -> Vec<f64> {
    let n = (horizon / step - 1e-9).ceil() as usize;
    let mut times: Vec<f64> = (0..n).map(|i| i as f64 * step).filter(|t| (t - t_gel).abs() > 0.25 * step).collect();
    if t_gel < horizon {
        times.push(t_gel);
    }
    times.push(horizon);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    times
}

fn check_init(init: &MassDistribution, k_max: usize) -> Result<()> {
    if init.tail.as_ref().is_some_and(|t| t.amplitude > 0.0) {
        return Err(Error::InvalidDistribution("initial distribution must have finite support".into()));
    }
    if init.masses.len() > k_max {
        return Err(Error::InvalidDistribution(format!("initial support {} exceeds K = {k_max}", init.masses.len())));
    }
    init.check_conservative(EXACT_TOL)
}

/// Solve the truncated system on `[0, cfg.horizon]`.
pub fn solve(init: &MassDistribution, cfg: &SolverConfig, closure: Closure) -> Result<Environment> {
    cfg.validate()?;
    check_init(init, cfg.k_max)?;
    let k_max = cfg.k_max;
    let t_gel = gelation_time(init)?;
    let grid = output_grid(cfg.horizon, cfg.output_step, t_gel);

    let mut integ = Integrator::new(k_max, cfg.fft_crossover);
    let mut u = vec![0.0; k_max + 1];
    u[..init.masses.len()].copy_from_slice(&init.masses);

    let mut v_rows = Vec::with_capacity(grid.len() * k_max);
    let mut phi = Vec::with_capacity(grid.len());
    let mut phi_int = Vec::with_capacity(grid.len());
    let mut tails = Vec::with_capacity(grid.len());
    let mut diag = SolveDiagnostics { fft: integ.conv.uses_fft(), ..Default::default() };
    let transient = t_gel + 10.0 / (k_max as f64).sqrt();

    let mut record = |integ: &mut Integrator, u: &[f64], t: f64, diag: &mut SolveDiagnostics| -> Result<()> {
        let v = &u[..k_max];
        let critical = closure == Closure::CriticalFire && t >= t_gel;
        let (fine, coarse) = if critical { integ.phi(v) } else { (0.0, 0.0) };
        if critical && t > transient {
            let scale = fine.max(0.1);
            if fine < -cfg.phi_consistency * scale || (fine - coarse).abs() > cfg.phi_consistency * scale {
                return Err(Error::NonConvergedPhi { t, fine, coarse });
            }
        }
        let phi_t = fine.max(0.0);
        // At the gel point itself the tail is an exact power law.
        let tail = if critical {
            Some(TailModel::power_law(k_max, (2.0 * phi_t / std::f64::consts::PI).sqrt()))
        } else if t == t_gel {
            fit_tail(v).map(|_| TailModel::power_law(k_max, critical_amplitude(v)))
        } else {
            fit_tail(v)
        };
        let total: f64 = v.iter().sum::<f64>() + tail.as_ref().map_or(0.0, TailModel::mass);
        v_rows.extend_from_slice(v);
        phi.push(phi_t);
        phi_int.push(u[k_max]);
        tails.push(tail);
        diag.defect.push(total - 1.0);
        diag.phi_coarse.push(coarse.max(0.0));
        Ok(())
    };

    record(&mut integ, &u, 0.0, &mut diag)?;
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        integ.post_gel = closure == Closure::CriticalFire && a >= t_gel;
        let h0 = cfg.nominal_step(a, t_gel, integ.post_gel);
        let n = ((b - a) / h0 - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for i in 0..n {
            let t = a + i as f64 * h;
            integ.advance(&mut u, t, h, cfg.tol, 0, cfg.max_halvings)?;
            clamp_negative(&mut u[..k_max], t + h)?;
            diag.steps += 1;
        }
        record(&mut integ, &u, b, &mut diag)?;
    }
    diag.halvings = integ.halvings;
    diag.min_step = integ.min_step;

    Ok(Environment::from_rows(closure, k_max, t_gel, init.clone(), grid, v_rows, phi, phi_int, tails, diag))
}
