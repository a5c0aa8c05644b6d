//! Monotone piecewise cubic Hermite interpolation (Fritsch–Carlson).

/// Three-point slopes, limited so each cubic piece stays monotone.
/// `first` overrides the left end slope before limiting.
pub fn fritsch_carlson(x: &[f64], y: &[f64], first: Option<f64>) -> Vec<f64> {
    let n = x.len();
    assert_eq!(n, y.len());
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m = vec![d[0], d[0]];
    } else {
        // one-sided quadratic fits at the ends
        m[0] = ((2.0 * h[0] + h[1]) * d[0] - h[0] * d[1]) / (h[0] + h[1]);
        m[n - 1] = ((2.0 * h[n - 2] + h[n - 3]) * d[n - 2] - h[n - 2] * d[n - 3]) / (h[n - 2] + h[n - 3]);
    }
    if let Some(f) = first {
        m[0] = f;
    }
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] > 0.0 { (h[i] * d[i - 1] + h[i - 1] * d[i]) / (h[i - 1] + h[i]) } else { 0.0 };
    }
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        if m[i] / d[i] < 0.0 {
            m[i] = 0.0;
        }
        if m[i + 1] / d[i] < 0.0 {
            m[i + 1] = 0.0;
        }
        let a = m[i] / d[i];
        let b = m[i + 1] / d[i];
        let r = a * a + b * b;
        if r > 9.0 {
            let s = 3.0 / r.sqrt();
            m[i] = s * a * d[i];
            m[i + 1] = s * b * d[i];
        }
    }
    m
}

/// Cubic Hermite on `[x[i], x[i+1]]` evaluated at `t`.
pub fn hermite(x: &[f64], y: &[f64], m: &[f64], i: usize, t: f64) -> f64 {
    let h = x[i + 1] - x[i];
    let s = (t - x[i]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y[i]
        + (s3 - 2.0 * s2 + s) * h * m[i]
        + (-2.0 * s3 + 3.0 * s2) * y[i + 1]
        + (s3 - s2) * h * m[i + 1]
}

/// Monotone interpolant through increasing knots `x`; clamps outside them.
#[derive(Clone, Debug, Default)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let m = fritsch_carlson(&x, &y, None);
        MonotoneCubic { x, y, m }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 0 {
            return f64::NAN;
        }
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&s| s <= t) - 1;
        hermite(&self.x, &self.y, &self.m, i, t)
    }
}
