//! Sampled vector-valued functions of time on a uniform grid, carrying an
//! exponential weight rate. Norms use the left-endpoint rule
//! `sum_j |f(t_j)|^2 exp(-2 nu t_j) dt`.

use std::io::{BufRead, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EvoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return invalid(format!("time step must be positive and finite, got {dt}"));
        }
        if n < 2 {
            return invalid(format!("need at least 2 samples, got {n}"));
        }
        Ok(TimeGrid { t0, dt, n })
    }

    /// Window length `n * dt`.
    pub fn window(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.t(j)).collect()
    }

    /// Index of the grid point nearest to `a`, clamped to `0..=n`.
    pub fn split_index(&self, a: f64) -> usize {
        let x = ((a - self.t0) / self.dt).round();
        if x <= 0.0 {
            0
        } else if x >= self.n as f64 {
            self.n
        } else {
            x as usize
        }
    }

    /// Integer number of steps represented by `h`, if `h` is grid aligned.
    pub fn steps(&self, h: f64) -> Result<i64> {
        let s = h / self.dt;
        let r = s.round();
        if (s - r).abs() > 1e-9 * s.abs().max(1.0) {
            return invalid(format!("shift {h} is not a multiple of dt = {}", self.dt));
        }
        Ok(r as i64)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n == other.n
            && (self.dt - other.dt).abs() <= 1e-14 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-12 * self.dt.max(self.t0.abs())
    }
}

pub fn make_grid(t0: f64, dt: f64, n: usize) -> Result<TimeGrid> {
    TimeGrid::new(t0, dt, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSignal {
    pub grid: TimeGrid,
    pub nu: f64,
    pub dim: usize,
    /// Time-major: sample `j` occupies `values[j*dim..(j+1)*dim]`.
    pub values: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightDirection {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportReport {
    pub a: f64,
    pub pre_mass: f64,
    pub post_mass: f64,
}

impl WeightedSignal {
    pub fn new(grid: TimeGrid, nu: f64, dim: usize, values: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return invalid("state dimension must be at least 1");
        }
        if values.len() != grid.n * dim {
            return Err(EvoError::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.n * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("signal contains non-finite samples");
        }
        if !nu.is_finite() {
            return invalid("weight rate must be finite");
        }
        Ok(WeightedSignal { grid, nu, dim, values })
    }

    pub fn zeros(grid: TimeGrid, nu: f64, dim: usize) -> Self {
        WeightedSignal { grid, nu, dim, values: vec![C64::new(0.0, 0.0); grid.n * dim] }
    }

    pub fn from_fn<F>(grid: TimeGrid, nu: f64, dim: usize, mut f: F) -> Self
    where
        F: FnMut(f64, &mut [C64]),
    {
        let mut s = Self::zeros(grid, nu, dim);
        for j in 0..grid.n {
            let t = grid.t(j);
            f(t, &mut s.values[j * dim..(j + 1) * dim]);
        }
        s
    }

    /// Scalar signal from a real function of time.
    pub fn from_real_fn(grid: TimeGrid, nu: f64, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, nu, 1, |t, out| out[0] = C64::new(f(t), 0.0))
    }

    pub fn sample(&self, j: usize) -> &[C64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn sample_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn component(&self, c: usize) -> Vec<C64> {
        (0..self.grid.n).map(|j| self.values[j * self.dim + c]).collect()
    }

    /// Components `range` as a new signal.
    pub fn slice_components(&self, range: std::ops::Range<usize>) -> WeightedSignal {
        let d = range.len();
        let mut out = WeightedSignal::zeros(self.grid, self.nu, d);
        for j in 0..self.grid.n {
            out.values[j * d..(j + 1) * d].copy_from_slice(&self.sample(j)[range.clone()]);
        }
        out
    }

    pub fn with_nu(&self, nu: f64) -> WeightedSignal {
        WeightedSignal { nu, ..self.clone() }
    }

    pub fn weight(&self, j: usize) -> f64 {
        (-2.0 * self.nu * self.grid.t(j)).exp() * self.grid.dt
    }

    pub fn norm_sq(&self) -> f64 {
        (0..self.grid.n)
            .map(|j| self.weight(j) * self.sample(j).iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest sample magnitude over all times and components.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Euclidean norm of the sample at index `j`.
    pub fn sample_norm(&self, j: usize) -> f64 {
        self.sample(j).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn check_compatible(&self, other: &WeightedSignal) -> Result<()> {
        if !self.grid.same_as(&other.grid) || self.dim != other.dim {
            return Err(EvoError::ShapeMismatch(format!(
                "grids or dimensions differ ({:?}/{} vs {:?}/{})",
                self.grid, self.dim, other.grid, other.dim
            )));
        }
        if (self.nu - other.nu).abs() > 1e-14 * self.nu.abs().max(1.0) {
            return Err(EvoError::ShapeMismatch(format!(
                "weight rates differ ({} vs {})",
                self.nu, other.nu
            )));
        }
        Ok(())
    }

    pub fn zip_with(&self, other: &WeightedSignal, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(WeightedSignal { values, ..self.clone() })
    }

    pub fn add(&self, other: &WeightedSignal) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &WeightedSignal) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Self {
        WeightedSignal { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn map_samples(&self, mut f: impl FnMut(f64, &[C64], &mut [C64])) -> Self {
        let mut out = WeightedSignal::zeros(self.grid, self.nu, self.dim);
        for j in 0..self.grid.n {
            let t = self.grid.t(j);
            f(t, self.sample(j), &mut out.values[j * self.dim..(j + 1) * self.dim]);
        }
        out
    }

    /// Multiply by the indicator of `[a, inf)` (sample-wise, using the split index).
    pub fn cut_before(&self, a: f64) -> Self {
        let k = self.grid.split_index(a);
        let mut out = self.clone();
        for v in &mut out.values[..k * self.dim] {
            *v = C64::new(0.0, 0.0);
        }
        out
    }

    /// Multiply by the indicator of `(-inf, a)`.
    pub fn cut_after(&self, a: f64) -> Self {
        let k = self.grid.split_index(a);
        let mut out = self.clone();
        for v in &mut out.values[k * self.dim..] {
            *v = C64::new(0.0, 0.0);
        }
        out
    }
}

pub fn weighted_inner(f: &WeightedSignal, g: &WeightedSignal) -> Result<C64> {
    f.check_compatible(g)?;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..f.grid.n {
        let w = f.weight(j);
        let s: C64 = f.sample(j).iter().zip(g.sample(j)).map(|(a, b)| a.conj() * b).sum();
        acc += s * w;
    }
    Ok(acc)
}

/// `Forward` maps `f` to `exp(-nu t) f` tagged with rate 0; `Inverse` undoes it,
/// reading the target rate from `nu`.
pub fn exp_weight(f: &WeightedSignal, direction: WeightDirection, nu: f64) -> WeightedSignal {
    match direction {
        WeightDirection::Forward => {
            let mut out = f.map_samples(|t, x, y| {
                let w = (-f.nu * t).exp();
                for (a, b) in y.iter_mut().zip(x) {
                    *a = b * w;
                }
            });
            out.nu = 0.0;
            out
        }
        WeightDirection::Inverse => {
            let mut out = f.map_samples(|t, x, y| {
                let w = (nu * t).exp();
                for (a, b) in y.iter_mut().zip(x) {
                    *a = b * w;
                }
            });
            out.nu = nu;
            out
        }
    }
}

pub fn support_mass(f: &WeightedSignal, a: f64) -> SupportReport {
    let k = f.grid.split_index(a);
    let mut pre = 0.0;
    let mut post = 0.0;
    for j in 0..f.grid.n {
        let m = f.weight(j) * f.sample(j).iter().map(|v| v.norm_sqr()).sum::<f64>();
        if j < k {
            pre += m;
        } else {
            post += m;
        }
    }
    SupportReport { a, pre_mass: pre, post_mass: post }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SignalHeader {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
    pub nu: f64,
    pub dim: usize,
}

impl WeightedSignal {
    pub fn header(&self) -> SignalHeader {
        SignalHeader { t0: self.grid.t0, dt: self.grid.dt, n: self.grid.n, nu: self.nu, dim: self.dim }
    }

    /// CSV with columns `t, re0, im0, re1, im1, ...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = String::from("t");
        for c in 0..self.dim {
            head.push_str(&format!(",re{c},im{c}"));
        }
        writeln!(w, "{head}")?;
        for j in 0..self.grid.n {
            let mut line = format!("{}", self.grid.t(j));
            for v in self.sample(j) {
                line.push_str(&format!(",{},{}", v.re, v.im));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(header: &SignalHeader, r: R) -> Result<Self> {
        let grid = TimeGrid::new(header.t0, header.dt, header.n)?;
        let mut values = Vec::with_capacity(header.n * header.dim);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| EvoError::Parse(format!("line {}: {e}", i + 1))))
                .collect::<Result<_>>()?;
            if cols.len() != 1 + 2 * header.dim {
                return Err(EvoError::Parse(format!("line {}: expected {} columns", i + 1, 1 + 2 * header.dim)));
            }
            for c in 0..header.dim {
                values.push(C64::new(cols[1 + 2 * c], cols[2 + 2 * c]));
            }
        }
        WeightedSignal::new(grid, header.nu, header.dim, values)
    }
}
