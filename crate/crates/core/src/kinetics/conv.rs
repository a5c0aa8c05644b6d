//! Coagulation gain `(k/2) Σ_{l<k} v_l v_{k-l}` for sizes `1..=K`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Below this truncation the direct quadratic sum is faster than the FFT.
pub const FFT_CROSSOVER: usize = 128;

type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// Reusable workspace for the self-convolution of a length-`K` vector.
pub struct Convolver {
    k_max: usize,
    fft: Option<FftPair>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Convolver {
    pub fn new(k_max: usize) -> Self {
        Self::with_crossover(k_max, FFT_CROSSOVER)
    }

    pub fn with_crossover(k_max: usize, crossover: usize) -> Self {
        if k_max < crossover {
            return Convolver { k_max, fft: None, buf: Vec::new(), scratch: Vec::new() };
        }
        let len = (2 * k_max).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Convolver {
            k_max,
            fft: Some((fwd, inv)),
            buf: vec![Complex64::default(); len],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn uses_fft(&self) -> bool {
        self.fft.is_some()
    }

    /// Write the gain for sizes `1..=K` into `out[0..K]` given `v[0..K] = v_1..v_K`.
    pub fn gain(&mut self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.k_max);
        debug_assert_eq!(out.len(), self.k_max);
        match &self.fft {
            None => gain_direct(v, out),
            Some((fwd, inv)) => {
                let len = self.buf.len();
                for (b, &x) in self.buf.iter_mut().zip(v) {
                    *b = Complex64::new(x, 0.0);
                }
                self.buf[v.len()..].fill(Complex64::default());
                fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
                for b in self.buf.iter_mut() {
                    *b = *b * *b;
                }
                inv.process_with_scratch(&mut self.buf, &mut self.scratch);
                let scale = 1.0 / len as f64;
                // (v * v)[m] pairs sizes summing to m + 2
                out[0] = 0.0;
                for k in 2..=self.k_max {
                    out[k - 1] = 0.5 * k as f64 * self.buf[k - 2].re * scale;
                }
            }
        }
    }
}

/// Quadratic-time reference implementation.
pub fn gain_direct(v: &[f64], out: &mut [f64]) {
    let k_max = v.len();
    for k in 1..=k_max {
        let mut s = 0.0;
        for l in 1..=(k - 1) / 2 {
            s += v[l - 1] * v[k - l - 1];
        }
        s *= 2.0;
        if k % 2 == 0 {
            let h = v[k / 2 - 1];
            s += h * h;
        }
        out[k - 1] = 0.5 * k as f64 * s;
    }
}
