//! Characteristic curves `ψ_y` of the controlled generating-function flow.
//!
//! `ψ_y(s)` is the probability that the tagged process started from one at
//! time `s` does not explode during `(s, y]`. After gelation the curve is
//! computed through `υ = √(1 - ψ)`, which solves a regular ODE. Before
//! gelation the curves are `ψ_y(t) = w e^{t (1 - X_0(w))}` with `w = ψ_y(0)`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{fritsch_carlson, hermite, MonotoneCubic};
use crate::kinetics::Environment;
use crate::mass::MassDistribution;

/// How the segment before gelation is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreGel {
    /// Solve for `ψ_y(0)` from `ψ_y(T_gel)` and use the exponential form.
    ClosedForm,
    /// Integrate `dψ/dt = ψ (1 - X_t(ψ))` against the interpolated environment.
    Integrate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub pre_gel: PreGel,
    /// Nominal integration step.
    pub step: f64,
    /// Absolute step-doubling tolerance.
    pub tol: f64,
    pub max_halvings: u32,
    /// Width of the linear blend of `F` towards `√(2φ)` near `w = 0`.
    pub blend_width: f64,
    /// Number of geometrically spaced horizons in a default family.
    pub family_size: usize,
    /// Smallest `y - T_gel` in a default family.
    pub min_offset: f64,
    /// Widest horizon bracket allowed when inverting for an explosion time.
    pub max_gap: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            pre_gel: PreGel::ClosedForm,
            step: 2.5e-3,
            tol: 1e-11,
            max_halvings: 16,
            blend_width: 0.0,
            family_size: 64,
            min_offset: 1e-4,
            max_gap: 0.5,
        }
    }
}

impl CurveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("curves.{what}")));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step");
        }
        if !(self.tol > 0.0) {
            return bad("tol");
        }
        if !(self.blend_width >= 0.0 && self.blend_width < 1.0) {
            return bad("blend_width");
        }
        if self.family_size < 2 {
            return bad("family_size");
        }
        if !(self.min_offset > 0.0) {
            return bad("min_offset");
        }
        if !(self.max_gap > 0.0) {
            return bad("max_gap");
        }
        Ok(())
    }
}

/// `F(t, w)`: 1 for `w > 1`, `(1 - X_t(1 - w²))/w` on `(0, 1]`, `√(2φ(t))` for `w <= 0`.
pub fn eval_f(env: &Environment, t: f64, w: f64) -> f64 {
    eval_f_blended(env, t, w, 0.0)
}

/// [`eval_f`] with a linear blend to the `w = 0` value on `(0, width)`.
pub fn eval_f_blended(env: &Environment, t: f64, w: f64, width: f64) -> f64 {
    if w > 1.0 {
        return 1.0;
    }
    let at_zero = (2.0 * env.phi_at(t)).sqrt();
    if w <= 0.0 {
        return at_zero;
    }
    if w < width {
        let edge = env.one_minus_x(t, width * width) / width;
        let a = w / width;
        return (1.0 - a) * at_zero + a * edge;
    }
    env.one_minus_x(t, w * w) / w
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Largest `|Δψ/Δt - mean of ψ(1 - X_t(ψ)) at the ends|` over grid intervals.
    pub max_residual: f64,
    /// Same, divided by `max(1, √(2φ))` at the interval midpoint.
    pub max_scaled: f64,
    /// Midpoint of the interval attaining `max_scaled`.
    pub worst_time: f64,
    pub intervals: usize,
    pub steps: u64,
    pub halvings: u64,
    pub blend_width: f64,
}

#[derive(Clone, Debug)]
struct Interpolants {
    psi: MonotoneCubic,
    upsilon: MonotoneCubic,
    gel_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CharacteristicCurve {
    pub y: f64,
    pub grid: Vec<f64>,
    pub psi: Vec<f64>,
    /// `√(1 - ψ)` on grid points in `[T_gel, y]`.
    pub upsilon: Vec<Option<f64>>,
    pub residual_stats: ResidualStats,
    #[serde(skip)]
    interp: OnceLock<Interpolants>,
}

impl CharacteristicCurve {
    fn interpolants(&self) -> &Interpolants {
        self.interp.get_or_init(|| {
            let first = self.upsilon.iter().position(Option::is_some).unwrap_or(self.grid.len() - 1);
            let ux = self.grid[first..].to_vec();
            let uy = self.upsilon[first..].iter().map(|u| u.unwrap_or(0.0)).collect();
            Interpolants {
                psi: MonotoneCubic::new(self.grid.clone(), self.psi.clone()),
                upsilon: MonotoneCubic::new(ux, uy),
                gel_time: self.grid[first],
            }
        })
    }

    /// `ψ_y(t)`, equal to one from `y` on.
    pub fn psi_at(&self, t: f64) -> f64 {
        if t >= self.y {
            return 1.0;
        }
        let f = self.interpolants();
        if t >= f.gel_time {
            let u = f.upsilon.eval(t);
            return 1.0 - u * u;
        }
        f.psi.eval(t)
    }

    /// `1 - ψ_y(t)`, without cancellation after gelation.
    pub fn gap_at(&self, t: f64) -> f64 {
        if t >= self.y {
            return 0.0;
        }
        let f = self.interpolants();
        if t >= f.gel_time {
            let u = f.upsilon.eval(t);
            return u * u;
        }
        1.0 - f.psi.eval(t)
    }
}

/// Probability of no explosion during `(s, y]` from state `k` at time `s`: `ψ_y(s)^k`.
pub fn explosion_survival(curve: &CharacteristicCurve, s: f64, k: u64) -> f64 {
    let gap = curve.gap_at(s);
    (k as f64 * (-gap).ln_1p()).exp()
}

#[derive(Default)]
struct Counters {
    steps: u64,
    halvings: u64,
}

fn rk4(f: &impl Fn(f64, f64) -> f64, t: f64, x: f64, h: f64) -> f64 {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
    let k4 = f(t + h, x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn doubled(
    f: &impl Fn(f64, f64) -> f64,
    t: f64,
    x: f64,
    h: f64,
    cfg: &CurveConfig,
    depth: u32,
    n: &mut Counters,
) -> Result<f64> {
    let full = rk4(f, t, x, h);
    let mid = rk4(f, t, x, 0.5 * h);
    let two = rk4(f, t + 0.5 * h, mid, 0.5 * h);
    let err = (full - two).abs();
    if err <= cfg.tol {
        n.steps += 1;
        return Ok(two);
    }
    if depth >= cfg.max_halvings {
        return Err(Error::StepRejected { t, err, tol: cfg.tol });
    }
    n.halvings += 1;
    let x = doubled(f, t, x, 0.5 * h, cfg, depth + 1, n)?;
    doubled(f, t + 0.5 * h, x, 0.5 * h, cfg, depth + 1, n)
}

/// Integrate from `t0` to `t1` (either direction) in equal nominal substeps.
fn integrate(
    f: &impl Fn(f64, f64) -> f64,
    t0: f64,
    t1: f64,
    mut x: f64,
    cfg: &CurveConfig,
    n: &mut Counters,
) -> Result<f64> {
    let substeps = ((t1 - t0).abs() / cfg.step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / substeps as f64;
    for i in 0..substeps {
        x = doubled(f, t0 + i as f64 * h, x, h, cfg, 0, n)?;
    }
    Ok(x)
}

/// `1 - w` where `w e^{T_gel (1 - X_0(w))} = 1 - gap_gel`, by bisection on
/// the left side, which decreases in `1 - w`.
fn gel_preimage(init: &MassDistribution, t_gel: f64, gap_gel: f64) -> f64 {
    if gap_gel <= 0.0 {
        return 0.0;
    }
    let total = init.total();
    let target = (-gap_gel).ln_1p();
    let lhs = |q: f64| (-q).ln_1p() + t_gel * init.generating_complement(q) / total;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..1100 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Backward solve for `ψ_y` on the environment grid truncated at `y`.
pub fn solve_psi(env: &Environment, y: f64, cfg: &CurveConfig) -> Result<CharacteristicCurve> {
    let t_gel = env.t_gel;
    if !(y > t_gel) {
        return Err(Error::HorizonBeforeGel { y, t_gel });
    }
    env.check_covers(y)?;
    let mut grid: Vec<f64> = env.times.iter().copied().filter(|&t| t < y - 1e-12).collect();
    if !grid.contains(&t_gel) {
        let at = grid.partition_point(|&t| t < t_gel);
        grid.insert(at, t_gel);
    }
    grid.push(y);
    let n = grid.len();
    let g = grid.iter().position(|&t| t == t_gel).expect("gel time on grid");

    let mut counters = Counters::default();
    let width = cfg.blend_width;
    let f_upsilon = |t: f64, u: f64| 0.5 * (u * u - 1.0) * eval_f_blended(env, t, u, width);
    let f_gap = |t: f64, q: f64| -(1.0 - q) * env.one_minus_x(t, q);

    let mut upsilon = vec![None; n];
    let mut gap = vec![0.0; n];
    upsilon[n - 1] = Some(0.0);
    let mut u = 0.0;
    for i in (g..n - 1).rev() {
        u = integrate(&f_upsilon, grid[i + 1], grid[i], u, cfg, &mut counters)?;
        upsilon[i] = Some(u);
        gap[i] = u * u;
    }
    match cfg.pre_gel {
        PreGel::ClosedForm => {
            let total = env.init.total();
            let q = gel_preimage(&env.init, t_gel, gap[g]);
            let rate = env.init.generating_complement(q) / total;
            for i in 0..g {
                gap[i] = -((-q).ln_1p() + grid[i] * rate).exp_m1();
            }
        }
        PreGel::Integrate => {
            let mut q = gap[g];
            for i in (0..g).rev() {
                q = integrate(&f_gap, grid[i + 1], grid[i], q, cfg, &mut counters)?;
                gap[i] = q;
            }
        }
    }
    let psi: Vec<f64> = gap.iter().map(|q| 1.0 - q).collect();

    let rhs = |i: usize| (1.0 - gap[i]) * env.one_minus_x(grid[i], gap[i]);
    let mut stats = ResidualStats {
        intervals: n - 1,
        steps: counters.steps,
        halvings: counters.halvings,
        blend_width: width,
        ..ResidualStats::default()
    };
    for i in 0..n - 1 {
        let dt = grid[i + 1] - grid[i];
        let r = ((gap[i] - gap[i + 1]) / dt - 0.5 * (rhs(i) + rhs(i + 1))).abs();
        let mid = 0.5 * (grid[i] + grid[i + 1]);
        let scaled = r / (2.0 * env.phi_at(mid)).sqrt().max(1.0);
        stats.max_residual = stats.max_residual.max(r);
        if scaled > stats.max_scaled {
            stats.max_scaled = scaled;
            stats.worst_time = mid;
        }
    }
    Ok(CharacteristicCurve { y, grid, psi, upsilon, residual_stats: stats, interp: OnceLock::new() })
}

/// Curves for a set of horizons, sorted by `y`, used to invert `y ↦ ψ_y(s)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveFamily {
    pub t_gel: f64,
    pub max_gap: f64,
    pub curves: Vec<CharacteristicCurve>,
}

/// `family_size` horizons spaced geometrically in `y - T_gel` up to the
/// environment horizon, merged with `extra`.
pub fn default_horizons(env: &Environment, cfg: &CurveConfig, extra: &[f64]) -> Vec<f64> {
    let lo = cfg.min_offset;
    let hi = env.horizon() - env.t_gel;
    let mut ys: Vec<f64> = if hi > lo {
        let n = cfg.family_size;
        (0..n).map(|i| env.t_gel + lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    } else {
        Vec::new()
    };
    if let Some(last) = ys.last_mut() {
        *last = env.horizon();
    }
    ys.extend(extra.iter().copied().filter(|&y| y > env.t_gel));
    ys.sort_by(f64::total_cmp);
    ys.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    ys
}

impl CurveFamily {
    pub fn build(env: &Environment, horizons: &[f64], cfg: &CurveConfig) -> Result<Self> {
        cfg.validate()?;
        let mut ys = horizons.to_vec();
        ys.sort_by(f64::total_cmp);
        ys.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        let curves = ys.par_iter().map(|&y| solve_psi(env, y, cfg)).collect::<Result<Vec<_>>>()?;
        Ok(CurveFamily { t_gel: env.t_gel, max_gap: cfg.max_gap, curves })
    }

    pub fn y_max(&self) -> f64 {
        self.curves.last().map_or(self.t_gel, |c| c.y)
    }

    /// The curve with horizon `y`, if the family has one.
    pub fn curve(&self, y: f64) -> Option<&CharacteristicCurve> {
        self.curves.iter().find(|c| (c.y - y).abs() <= 1e-9)
    }

    /// Largest `ψ_{y'}(t) - ψ_y(t)` over `y < y'` neighbours and `t` on the
    /// finer grid below `y`; negative when the curves are strictly ordered.
    pub fn max_crossing(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for pair in self.curves.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            for &t in a.grid.iter().filter(|&&t| t < a.y) {
                worst = worst.max(b.psi_at(t) - a.psi_at(t));
            }
        }
        worst
    }

    /// Explosion time from state `k` at time `s`, drawn by inverting
    /// `P[τ > y] = ψ_y(s)^k` at `u`. `None` when `τ` lies beyond the family.
    pub fn explosion_time(&self, env: &Environment, s: f64, k: u64, u: f64) -> Result<Option<f64>> {
        let base = s.max(self.t_gel);
        if base >= self.y_max() {
            return Ok(None);
        }
        // Knots (υ_y(s), y) with υ = √(1 - ψ), increasing in both.
        let mut xs = vec![0.0];
        let mut ys = vec![base];
        for c in self.curves.iter().filter(|c| c.y > base) {
            let v = c.gap_at(s).sqrt();
            if v > *xs.last().expect("anchor") {
                xs.push(v);
                ys.push(c.y);
            }
        }
        if xs.len() < 2 {
            return Err(Error::CurveFamilyTooSparse { s, reason: "no horizon resolves the survival law".into() });
        }
        let target = (-(u.ln() / k as f64).exp_m1()).max(0.0).sqrt();
        if target >= *xs.last().expect("nonempty") {
            return Ok(None);
        }
        let i = xs.partition_point(|&x| x <= target) - 1;
        if ys[i + 1] - ys[i] > self.max_gap {
            return Err(Error::CurveFamilyTooSparse {
                s,
                reason: format!("bracket [{}, {}] wider than {}", ys[i], ys[i + 1], self.max_gap),
            });
        }
        // After gelation υ_y(s) ≈ (y - s) F(s, 0)/2 for y near s.
        let first = if s >= self.t_gel {
            let f0 = (2.0 * env.phi_at(s)).sqrt();
            (f0 > 0.0).then(|| 2.0 / f0)
        } else {
            None
        };
        let m = fritsch_carlson(&xs, &ys, first);
        let y = hermite(&xs, &ys, &m, i, target).clamp(ys[i], ys[i + 1]);
        Ok(Some(y))
    }
}
