//! Causal fixed-point solvers: `u = I F(u)` by contraction in the weighted
//! norm, classical initial value problems, and delay equations.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, EvoError, Result};
use crate::signal::{TimeGrid, WeightedSignal};

type Evaluator = Box<dyn Fn(&WeightedSignal) -> Result<WeightedSignal> + Send + Sync>;

/// A causal, uniformly Lipschitz right-hand side acting on whole signals.
pub struct CausalMap {
    evaluator: Evaluator,
    pub lipschitz: f64,
    pub dim: usize,
}

impl std::fmt::Debug for CausalMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CausalMap").field("lipschitz", &self.lipschitz).field("dim", &self.dim).finish()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeReport {
    pub max_ratio: f64,
    pub causal: bool,
}

impl CausalMap {
    pub fn new(
        dim: usize,
        lipschitz: f64,
        evaluator: impl Fn(&WeightedSignal) -> Result<WeightedSignal> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lipschitz >= 0.0) {
            return invalid("Lipschitz constant must be nonnegative");
        }
        Ok(CausalMap { evaluator: Box::new(evaluator), lipschitz, dim })
    }

    /// `F(u)(t) = f(t, u(t))`.
    pub fn pointwise(
        dim: usize,
        lipschitz: f64,
        f: impl Fn(f64, &[C64], &mut [C64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(dim, lipschitz, move |u| Ok(u.map_samples(|t, x, o| f(t, x, o))))
    }

    pub fn eval(&self, u: &WeightedSignal) -> Result<WeightedSignal> {
        if u.dim != self.dim {
            return Err(EvoError::ShapeMismatch(format!("map expects dimension {}, got {}", self.dim, u.dim)));
        }
        let out = (self.evaluator)(u)?;
        if out.dim != self.dim || !out.grid.same_as(&u.grid) {
            return Err(EvoError::ShapeMismatch("map changed the grid or dimension".into()));
        }
        Ok(out)
    }

    /// Random probe pairs: largest difference quotient and a support test.
    pub fn probe(&self, grid: TimeGrid, nu: f64, pairs: usize, seed: u64) -> Result<ProbeReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_ratio: f64 = 0.0;
        let mut causal = true;
        for _ in 0..pairs {
            let scale = rng.gen_range(0.01..2.0);
            let u = random_signal(&mut rng, grid, nu, self.dim, scale);
            let v = random_signal(&mut rng, grid, nu, self.dim, scale);
            let du = u.sub(&v)?.norm();
            if du > 0.0 {
                max_ratio = max_ratio.max(self.eval(&u)?.sub(&self.eval(&v)?)?.norm() / du);
            }
            let a = grid.t(rng.gen_range(1..grid.n));
            let w = u.cut_after(a).add(&v.cut_before(a))?;
            let fu = self.eval(&u)?.cut_after(a);
            let fw = self.eval(&w)?.cut_after(a);
            if fu.sub(&fw)?.max_abs() > 1e-12 * (1.0 + fu.max_abs()) {
                causal = false;
            }
        }
        Ok(ProbeReport { max_ratio, causal })
    }

    /// Fails when a probe exceeds the declared constant by more than 5%.
    pub fn verify(&self, grid: TimeGrid, nu: f64, pairs: usize, seed: u64) -> Result<ProbeReport> {
        let r = self.probe(grid, nu, pairs, seed)?;
        if r.max_ratio > 1.05 * self.lipschitz + 1e-14 {
            return invalid(format!("probed Lipschitz ratio {} exceeds declared {}", r.max_ratio, self.lipschitz));
        }
        if !r.causal {
            return invalid("map failed a causality probe");
        }
        Ok(r)
    }
}

fn random_signal(rng: &mut ChaCha8Rng, grid: TimeGrid, nu: f64, dim: usize, scale: f64) -> WeightedSignal {
    WeightedSignal::from_fn(grid, nu, dim, |_, o| {
        for x in o.iter_mut() {
            *x = C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
        }
    })
}

/// Cumulative trapezoid integral from the first sample, which is taken as
/// the start of the support. Lower triangular, hence causal.
pub fn causal_integral(f: &WeightedSignal) -> WeightedSignal {
    let d = f.dim;
    let half = 0.5 * f.grid.dt;
    let mut out = WeightedSignal::zeros(f.grid, f.nu, d);
    for j in 1..f.grid.n {
        for k in 0..d {
            let prev = out.values[(j - 1) * d + k];
            out.values[j * d + k] = prev + (f.values[(j - 1) * d + k] + f.values[j * d + k]) * half;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub u: WeightedSignal,
    pub iterations: usize,
    /// Largest observed ratio of successive update norms.
    pub factor: f64,
    pub bound: f64,
}

/// Picard iteration `u <- I F(u)` from `u = 0`, stopped when the update is
/// below `tol` in the weighted norm.
///
/// Late samples carry tiny weights, so after the weighted criterion is met
/// the iteration continues (within `max_iter`) until the largest pointwise
/// update is also below `tol` relative to the solution size.
pub fn contraction_solve(f: &CausalMap, grid: TimeGrid, nu: f64, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    if !(nu > f.lipschitz) || !(nu > 0.0) {
        return Err(EvoError::ContractionViolation { nu, lipschitz: f.lipschitz });
    }
    let mut u = WeightedSignal::zeros(grid, nu, f.dim);
    let mut prev_step = f64::NAN;
    let mut factor: f64 = 0.0;
    let mut converged = None;
    for it in 1..=max_iter {
        let next = causal_integral(&f.eval(&u)?);
        let diff = next.sub(&u)?;
        let step = diff.norm();
        if converged.is_none() && prev_step > 0.0 && step > 1e3 * f64::EPSILON * next.norm() {
            factor = factor.max(step / prev_step);
        }
        let sup_small = diff.max_abs() <= tol * next.max_abs().max(1.0);
        u = next;
        if step < tol && converged.is_none() {
            converged = Some(it);
        }
        if converged.is_some() && sup_small {
            return Ok(FixedPoint { u, iterations: it, factor, bound: f.lipschitz / nu });
        }
        prev_step = step;
    }
    match converged {
        Some(_) => Ok(FixedPoint { u, iterations: max_iter, factor, bound: f.lipschitz / nu }),
        None => Err(EvoError::NonConvergence { iterations: max_iter, factor }),
    }
}

#[derive(Debug, Clone)]
pub struct IvpOptions {
    /// Radius of the tube around `x0` on which `f` is Lipschitz.
    pub radius: f64,
    pub lipschitz: f64,
    pub nu: f64,
    pub steps: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IvpOptions {
    fn default() -> Self {
        IvpOptions { radius: 1.0, lipschitz: 1.0, nu: 0.0, steps: 1024, tol: 1e-13, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub requested_delta: f64,
    pub achieved_delta: f64,
    pub iterations: usize,
}

impl Trajectory {
    pub fn shrunk(&self) -> bool {
        self.achieved_delta < self.requested_delta
    }
}

fn project_ball(y: &[C64], r: f64, out: &mut [C64]) {
    let n = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let s = if n > r { r / n } else { 1.0 };
    for (o, v) in out.iter_mut().zip(y) {
        *o = v * s;
    }
}

/// `x' = f(t, x)`, `x(t0) = x0` on `[t0, t0 + delta]`.
///
/// The problem is shifted to the origin and `f` is composed with the metric
/// projection onto the tube, which keeps it globally Lipschitz. If the
/// solution leaves the tube the horizon is cut at the exit time.
pub fn solve_classical_ivp(
    f: impl Fn(f64, &[C64], &mut [C64]) + Send + Sync + 'static,
    t0: f64,
    x0: &[C64],
    delta: f64,
    opts: &IvpOptions,
) -> Result<Trajectory> {
    if !(delta > 0.0) || opts.steps < 2 || !(opts.radius > 0.0) {
        return invalid("need delta > 0, radius > 0 and at least two steps");
    }
    let dim = x0.len();
    let nu = if opts.nu > 0.0 { opts.nu } else { 2.0 * opts.lipschitz + 1.0 };
    let dt = delta / opts.steps as f64;
    let grid = TimeGrid::new(0.0, dt, opts.steps + 1)?;
    let x0v = x0.to_vec();
    let r = opts.radius;
    let g = CausalMap::pointwise(dim, opts.lipschitz, move |s, y, out| {
        let mut p = vec![C64::new(0.0, 0.0); y.len()];
        project_ball(y, r, &mut p);
        let x: Vec<C64> = p.iter().zip(&x0v).map(|(a, b)| a + b).collect();
        f(t0 + s, &x, out);
    })?;
    let fp = contraction_solve(&g, grid, nu, opts.tol, opts.max_iter)?;
    let mut exit = grid.n;
    for j in 0..grid.n {
        if fp.u.sample_norm(j) >= r * (1.0 - 1e-12) {
            exit = j;
            break;
        }
    }
    let keep = exit.max(1);
    let times = (0..keep).map(|j| t0 + grid.t(j)).collect();
    let states = (0..keep).map(|j| fp.u.sample(j).iter().zip(x0).map(|(a, b)| a + b).collect()).collect();
    Ok(Trajectory {
        times,
        states,
        requested_delta: delta,
        achieved_delta: (keep - 1) as f64 * dt,
        iterations: fp.iterations,
    })
}

/// Right-hand side `G(t, u(t + h_1), ..., u(t + h_N))` of a delay equation.
pub struct DelayMap {
    #[allow(clippy::type_complexity)]
    f: Box<dyn Fn(f64, &[&[C64]], &mut [C64]) + Send + Sync>,
    /// Lipschitz constant in each argument.
    pub lipschitz: Vec<f64>,
    pub dim: usize,
}

impl DelayMap {
    pub fn new(
        dim: usize,
        lipschitz: Vec<f64>,
        f: impl Fn(f64, &[&[C64]], &mut [C64]) + Send + Sync + 'static,
    ) -> Self {
        DelayMap { f: Box::new(f), lipschitz, dim }
    }
}

/// `u = I G(tau_{h_1} u, ..., tau_{h_N} u)` with all `h_j <= 0` grid aligned.
pub fn solve_discrete_delay(
    g: DelayMap,
    delays: &[f64],
    grid: TimeGrid,
    nu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    if delays.len() != g.lipschitz.len() {
        return Err(EvoError::ShapeMismatch("one Lipschitz constant per delay".into()));
    }
    if let Some(h) = delays.iter().find(|&&h| h > 0.0) {
        return invalid(format!("delay {h} > 0 anticipates the future"));
    }
    let steps: Vec<usize> = delays.iter().map(|&h| grid.steps(h).map(|s| (-s) as usize)).collect::<Result<_>>()?;
    // |tau_h| = e^{nu h} in the weighted norm
    let lip: f64 = delays.iter().zip(&g.lipschitz).map(|(h, l)| l * (nu * h).exp()).sum();
    let dim = g.dim;
    let map = CausalMap::new(dim, lip, move |u| {
        let zero = vec![C64::new(0.0, 0.0); dim];
        let mut out = WeightedSignal::zeros(u.grid, u.nu, dim);
        for j in 0..u.grid.n {
            let args: Vec<&[C64]> = steps.iter().map(|&s| if j >= s { u.sample(j - s) } else { &zero[..] }).collect();
            (g.f)(u.grid.t(j), &args, out.sample_mut(j));
        }
        Ok(out)
    })?;
    contraction_solve(&map, grid, nu, tol, max_iter)
}

/// `u'(t) = f(t, u(t), u(t - h))` for `t > 0` with `u = u0` on `[-h, 0]`.
///
/// Solved for `v = u - 1_[0,inf) u0(0)`, which vanishes before zero; the
/// returned signal lives on `[-h, T)` and carries the history.
#[allow(clippy::too_many_arguments)]
pub fn solve_ivp_delay(
    f: impl Fn(f64, &[C64], &[C64], &mut [C64]) + Send + Sync + 'static,
    lipschitz: (f64, f64),
    h: f64,
    u0: impl Fn(f64, &mut [C64]),
    dim: usize,
    dt: f64,
    n: usize,
    nu: f64,
    tol: f64,
) -> Result<WeightedSignal> {
    if !(h > 0.0) {
        return invalid("delay must be positive");
    }
    let grid = TimeGrid::new(0.0, dt, n)?;
    let hs = grid.steps(h)? as usize;
    let mut hist = vec![C64::new(0.0, 0.0); (hs + 1) * dim];
    for i in 0..=hs {
        u0(-h + i as f64 * dt, &mut hist[i * dim..(i + 1) * dim]);
    }
    let at0: Vec<C64> = hist[hs * dim..].to_vec();
    let hist_c = hist.clone();
    let lip = lipschitz.0 + lipschitz.1 * (-nu * h).exp();
    let map = CausalMap::new(dim, lip, move |v| {
        let mut out = WeightedSignal::zeros(v.grid, v.nu, dim);
        let mut x = vec![C64::new(0.0, 0.0); dim];
        let mut y = vec![C64::new(0.0, 0.0); dim];
        for j in 0..v.grid.n {
            for k in 0..dim {
                x[k] = v.sample(j)[k] + at0[k];
                y[k] = if j >= hs { v.sample(j - hs)[k] + at0[k] } else { hist_c[j * dim + k] };
            }
            f(v.grid.t(j), &x, &y, out.sample_mut(j));
        }
        Ok(out)
    })?;
    let fp = contraction_solve(&map, grid, nu, tol, 1000)?;
    let full = TimeGrid::new(-(hs as f64) * dt, dt, n + hs)?;
    let mut values = hist[..hs * dim].to_vec();
    for j in 0..n {
        values.extend(fp.u.sample(j).iter().zip(&hist[hs * dim..]).map(|(a, b)| a + b));
    }
    WeightedSignal::new(full, nu, dim, values)
}
