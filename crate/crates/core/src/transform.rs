//! Discrete Fourier-Laplace transform on a weighted time grid.
//!
//! Normalization: `c_k = dt/sqrt(2 pi) * exp(-i w_k t0) * sum_j exp(-2 pi i jk/n) exp(-nu t_j) f_j`
//! and the spectrum norm is `(2 pi / T) * sum_k |c_k|^2`, which makes the
//! discrete Plancherel identity exact.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::signal::{TimeGrid, WeightedSignal};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: TimeGrid,
    pub nu: f64,
    pub dim: usize,
    /// Frequency-major: coefficient `k` occupies `coeffs[k*dim..(k+1)*dim]`.
    pub coeffs: Vec<C64>,
    pub freqs: Vec<f64>,
}

/// Signed angular frequencies in `(-pi/dt, pi/dt]`.
pub fn frequencies(grid: &TimeGrid) -> Vec<f64> {
    let n = grid.n as i64;
    let t = grid.window();
    (0..n)
        .map(|k| {
            let kk = if k > n / 2 { k - n } else { k };
            2.0 * PI * kk as f64 / t
        })
        .collect()
}

/// Frequency samples `z_k = i w_k + nu`.
pub fn z_values(grid: &TimeGrid, nu: f64) -> Vec<C64> {
    frequencies(grid).into_iter().map(|w| C64::new(nu, w)).collect()
}

impl Spectrum {
    pub fn coeff(&self, k: usize) -> &[C64] {
        &self.coeffs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        (2.0 * PI / self.grid.window() * s).sqrt()
    }

    pub fn z(&self, k: usize) -> C64 {
        C64::new(self.nu, self.freqs[k])
    }

    pub fn zeros_like(&self, dim: usize) -> Spectrum {
        Spectrum { coeffs: vec![C64::new(0.0, 0.0); self.grid.n * dim], dim, ..self.clone() }
    }

    /// CSV with columns `omega, re0, im0, ...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = String::from("omega");
        for c in 0..self.dim {
            head.push_str(&format!(",re{c},im{c}"));
        }
        writeln!(w, "{head}")?;
        for k in 0..self.grid.n {
            let mut line = format!("{}", self.freqs[k]);
            for v in self.coeff(k) {
                line.push_str(&format!(",{},{}", v.re, v.im));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn fft_components(data: &mut [C64], n: usize, dim: usize, inverse: bool) {
    let fft = plan(n, inverse);
    let mut cols: Vec<Vec<C64>> = (0..dim).map(|c| (0..n).map(|j| data[j * dim + c]).collect()).collect();
    cols.par_iter_mut().for_each(|col| fft.process(col));
    for (c, col) in cols.iter().enumerate() {
        for (j, v) in col.iter().enumerate() {
            data[j * dim + c] = *v;
        }
    }
}

pub fn forward(f: &WeightedSignal) -> Spectrum {
    let g = f.grid;
    let dim = f.dim;
    let mut data = f.values.clone();
    for j in 0..g.n {
        let w = (-f.nu * g.t(j)).exp();
        for v in &mut data[j * dim..(j + 1) * dim] {
            *v *= w;
        }
    }
    fft_components(&mut data, g.n, dim, false);
    let freqs = frequencies(&g);
    let s = g.dt / (2.0 * PI).sqrt();
    for (k, w) in freqs.iter().enumerate() {
        let ph = C64::from_polar(s, -w * g.t0);
        for v in &mut data[k * dim..(k + 1) * dim] {
            *v *= ph;
        }
    }
    Spectrum { grid: g, nu: f.nu, dim, coeffs: data, freqs }
}

pub fn inverse(s: &Spectrum) -> WeightedSignal {
    let g = s.grid;
    let dim = s.dim;
    let mut data = s.coeffs.clone();
    let scale = (2.0 * PI).sqrt() / g.dt / g.n as f64;
    for (k, w) in s.freqs.iter().enumerate() {
        let ph = C64::from_polar(scale, w * g.t0);
        for v in &mut data[k * dim..(k + 1) * dim] {
            *v *= ph;
        }
    }
    fft_components(&mut data, g.n, dim, true);
    for j in 0..g.n {
        let w = (s.nu * g.t(j)).exp();
        for v in &mut data[j * dim..(j + 1) * dim] {
            *v *= w;
        }
    }
    WeightedSignal { grid: g, nu: s.nu, dim, values: data }
}

/// Applies a scalar symbol `m(z)` with `z = i w + nu` to every component.
pub fn apply_symbol(f: &WeightedSignal, symbol: impl Fn(C64) -> C64 + Sync) -> WeightedSignal {
    let mut s = forward(f);
    let dim = s.dim;
    let nu = s.nu;
    let freqs = s.freqs.clone();
    s.coeffs.par_chunks_mut(dim).zip(freqs.par_iter()).for_each(|(c, w)| {
        let m = symbol(C64::new(nu, *w));
        for v in c {
            *v *= m;
        }
    });
    inverse(&s)
}

/// Applies a per-frequency linear map `out = T(z) * in` where the closure
/// receives `z`, the input coefficient block and the output block.
pub fn apply_frequency_map<F>(f: &WeightedSignal, out_dim: usize, map: F) -> Result<WeightedSignal>
where
    F: Fn(C64, &[C64], &mut [C64]) -> Result<()> + Sync,
{
    let s = forward(f);
    let out = map_spectrum(&s, out_dim, map)?;
    Ok(inverse(&out))
}

pub fn map_spectrum<F>(s: &Spectrum, out_dim: usize, map: F) -> Result<Spectrum>
where
    F: Fn(C64, &[C64], &mut [C64]) -> Result<()> + Sync,
{
    let mut out = s.zeros_like(out_dim);
    let nu = s.nu;
    out.coeffs
        .par_chunks_mut(out_dim)
        .enumerate()
        .map(|(k, o)| map(C64::new(nu, s.freqs[k]), s.coeff(k), o))
        .collect::<Result<Vec<()>>>()?;
    Ok(out)
}

/// Largest relative gap between `|f|_nu` and `|f 1_[0,inf)|_nu` over the given
/// rates, normalized by the norm at the signal's own rate.
pub fn hardy_residual(f: &WeightedSignal, nus: &[f64]) -> Result<f64> {
    if nus.is_empty() {
        return invalid("need at least one weight rate");
    }
    if nus.iter().any(|&v| !(v > 0.0)) {
        return invalid("weight rates must be positive");
    }
    let base = f.norm();
    if base == 0.0 {
        return Ok(0.0);
    }
    let causal = f.cut_before(0.0);
    let mut worst: f64 = 0.0;
    for &nu in nus {
        let a = f.with_nu(nu).norm();
        let b = causal.with_nu(nu).norm();
        worst = worst.max((a - b).abs() / base);
    }
    Ok(worst)
}
