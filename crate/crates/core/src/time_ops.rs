//! Time derivative, its causal inverse, adjoint, shifts, fractional integrals,
//! kernel convolution and the history functional.

use num_complex::Complex64 as C64;

use crate::error::{invalid, EvoError, Result};
use crate::signal::WeightedSignal;
use crate::transform::apply_symbol;

/// Which realization of the integrator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realization {
    /// Multiplier `1/(i w + nu)` in the transform domain.
    Spectral,
    /// Cumulative left-endpoint rule, strictly lower triangular for `nu > 0`.
    Quadrature,
}

pub fn derivative(f: &WeightedSignal) -> WeightedSignal {
    apply_symbol(f, |z| z)
}

/// Integrates with the time-domain quadrature (the causal realization).
pub fn integrate(f: &WeightedSignal) -> Result<WeightedSignal> {
    integrate_with(f, Realization::Quadrature)
}

pub fn integrate_spectral(f: &WeightedSignal) -> Result<WeightedSignal> {
    integrate_with(f, Realization::Spectral)
}

pub fn integrate_with(f: &WeightedSignal, how: Realization) -> Result<WeightedSignal> {
    if f.nu == 0.0 {
        return Err(EvoError::NotInvertible {
            z: C64::new(0.0, 0.0),
            detail: "the time derivative has no bounded inverse at nu = 0".into(),
        });
    }
    match how {
        Realization::Spectral => Ok(apply_symbol(f, |z| 1.0 / z)),
        Realization::Quadrature => Ok(quadrature_integral(f)),
    }
}

fn quadrature_integral(f: &WeightedSignal) -> WeightedSignal {
    let n = f.grid.n;
    let d = f.dim;
    let dt = f.grid.dt;
    let mut out = WeightedSignal::zeros(f.grid, f.nu, d);
    let mut acc = vec![C64::new(0.0, 0.0); d];
    if f.nu > 0.0 {
        for j in 0..n {
            out.sample_mut(j).copy_from_slice(&acc);
            for (a, v) in acc.iter_mut().zip(f.sample(j)) {
                *a += v * dt;
            }
        }
    } else {
        // u(t) = -int_t^inf f
        for j in (0..n).rev() {
            for (a, v) in acc.iter_mut().zip(f.sample(j)) {
                *a -= v * dt;
            }
            out.sample_mut(j).copy_from_slice(&acc);
        }
    }
    out
}

/// Applies `-d/dt + 2 nu`, the adjoint of the derivative in the weighted space.
pub fn adjoint_derivative(f: &WeightedSignal) -> WeightedSignal {
    let nu = f.nu;
    apply_symbol(f, move |z| -z + 2.0 * nu)
}

/// `f(. + h)` with zero fill; `h` must be a multiple of `dt`.
pub fn shift(f: &WeightedSignal, h: f64) -> Result<WeightedSignal> {
    let s = f.grid.steps(h)?;
    let n = f.grid.n as i64;
    let mut out = WeightedSignal::zeros(f.grid, f.nu, f.dim);
    for j in 0..n {
        let src = j + s;
        if (0..n).contains(&src) {
            out.sample_mut(j as usize).copy_from_slice(f.sample(src as usize));
        }
    }
    Ok(out)
}

/// Principal branch `z^(-alpha)`.
pub fn frac_symbol(z: C64, alpha: f64) -> C64 {
    if alpha == 0.0 {
        return C64::new(1.0, 0.0);
    }
    let r = z.norm();
    let th = z.arg();
    C64::from_polar(r.powf(-alpha), -alpha * th)
}

pub fn fractional_integrate(f: &WeightedSignal, alpha: f64) -> Result<WeightedSignal> {
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("fractional order {alpha} outside [0, 1]"));
    }
    if !(f.nu > 0.0) {
        return invalid("fractional integration needs nu > 0");
    }
    Ok(apply_symbol(f, move |z| frac_symbol(z, alpha)))
}

/// Causal kernel sampled at `t_j = j * dt`, `j >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Kernel {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return invalid("kernel step must be positive");
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return invalid("kernel needs finite samples");
        }
        Ok(Kernel { dt, values })
    }

    pub fn from_fn(dt: f64, len: usize, k: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(dt, (0..len).map(|j| k(j as f64 * dt)).collect())
    }

    /// Builds a kernel from `(t, value)` pairs on a uniform grid starting at 0.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 2 {
            return invalid("kernel needs at least two samples");
        }
        if pairs.iter().any(|p| p.0 < 0.0) {
            return invalid("kernel has support before t = 0");
        }
        if pairs[0].0.abs() > 1e-12 {
            return invalid("kernel samples must start at t = 0");
        }
        let dt = pairs[1].0 - pairs[0].0;
        for (j, p) in pairs.iter().enumerate() {
            if (p.0 - j as f64 * dt).abs() > 1e-9 * dt.max(1.0) * (j as f64 + 1.0) {
                return invalid("kernel samples must be uniformly spaced");
            }
        }
        Self::new(dt, pairs.iter().map(|p| p.1).collect())
    }

    /// Reads `t,value` CSV (header line optional).
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 2 {
                return Err(EvoError::Parse(format!("kernel line {}: expected 2 columns", i + 1)));
            }
            match (cols[0].trim().parse::<f64>(), cols[1].trim().parse::<f64>()) {
                (Ok(t), Ok(v)) => pairs.push((t, v)),
                _ if i == 0 => continue,
                _ => return Err(EvoError::Parse(format!("kernel line {}: not numeric", i + 1))),
            }
        }
        Self::from_pairs(&pairs)
    }

    /// `int_0^inf |k(t)| exp(-nu t) dt` by the rectangle rule used in `convolve`.
    pub fn l1_weighted(&self, nu: f64) -> f64 {
        self.values.iter().enumerate().map(|(j, v)| v.abs() * (-nu * j as f64 * self.dt).exp() * self.dt).sum()
    }

    /// Composite trapezoid approximation of `int_0^inf exp(-z t) k(t) dt`.
    pub fn laplace(&self, z: C64) -> C64 {
        let n = self.values.len();
        let step = (-z * self.dt).exp();
        let mut e = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for (j, v) in self.values.iter().enumerate() {
            let w = if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
            acc += e * (*v * w);
            e *= step;
        }
        acc * self.dt
    }

    /// Trapezoid value together with a Richardson estimate of its error.
    pub fn laplace_with_error(&self, z: C64) -> (C64, f64) {
        let fine = self.laplace(z);
        if self.values.len() < 5 {
            return (fine, f64::INFINITY);
        }
        let coarse = Kernel { dt: 2.0 * self.dt, values: self.values.iter().step_by(2).copied().collect() };
        let c = coarse.laplace(z);
        (fine, (fine - c).norm() / 3.0)
    }
}

/// `(k * f)(t_j) = dt * sum_{i <= j} k_{j-i} f_i`.
pub fn convolve(k: &Kernel, f: &WeightedSignal) -> Result<WeightedSignal> {
    if (k.dt - f.grid.dt).abs() > 1e-12 * f.grid.dt {
        return invalid(format!("kernel step {} differs from grid step {}", k.dt, f.grid.dt));
    }
    let n = f.grid.n;
    let d = f.dim;
    let mut out = WeightedSignal::zeros(f.grid, f.nu, d);
    for j in 0..n {
        let lo = (j + 1).saturating_sub(k.values.len());
        let o = &mut out.values[j * d..(j + 1) * d];
        for i in lo..=j {
            let w = k.values[j - i] * k.dt;
            if w == 0.0 {
                continue;
            }
            for (a, v) in o.iter_mut().zip(&f.values[i * d..(i + 1) * d]) {
                *a += v * w;
            }
        }
    }
    Ok(out)
}

/// Norm of the history map `t -> f(t + .)|_[-window, 0]` in the weighted space;
/// `None` means an unbounded window.
pub fn history(f: &WeightedSignal, window: Option<f64>) -> Result<f64> {
    if !(f.nu > 0.0) {
        return invalid("history functional needs nu > 0");
    }
    let dt = f.grid.dt;
    let len = match window {
        Some(w) if w < 0.0 => return invalid("history window must be nonnegative"),
        Some(w) if w == 0.0 => return Ok(0.0),
        Some(w) => ((w / dt).round() as usize).max(1),
        None => usize::MAX,
    };
    let n = f.grid.n;
    let mass: Vec<f64> = (0..n).map(|j| f.sample(j).iter().map(|v| v.norm_sqr()).sum::<f64>() * dt).collect();
    let mut run = 0.0;
    let mut total = 0.0;
    for j in 0..n {
        run += mass[j];
        if len != usize::MAX && j >= len {
            run -= mass[j - len];
        }
        total += run * (-2.0 * f.nu * f.grid.t(j)).exp() * dt;
    }
    Ok(total.max(0.0).sqrt())
}

/// Operator norm of the discrete history map for an unbounded window:
/// `sqrt(dt / (1 - exp(-2 nu dt)))`, which tends to `1/sqrt(2 nu)`.
pub fn history_norm_estimate(dt: f64, nu: f64) -> f64 {
    (dt / (-(-2.0 * nu * dt).exp_m1())).sqrt()
}
