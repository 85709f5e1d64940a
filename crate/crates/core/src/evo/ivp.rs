//! Initial values and inhomogeneous Neumann data, both reduced to a forced
//! problem with zero data.

use serde::Serialize;

use super::{solve, EvoProblem, EvoSolution, Preset, SolverConfig};
use crate::error::{invalid, EvoError, Result};
use crate::linalg::{c, PatternSolver};
use crate::material::{Coeff, MaterialLaw};
use crate::signal::{TimeGrid, WeightedSignal};
use crate::spatial::{grid_norm, SpatialOperator};
use crate::transform::apply_frequency_map;
use crate::C64;

#[derive(Debug, Clone, Serialize)]
pub struct IvpSolution {
    pub solution: EvoSolution,
    /// `|(1 + A)^{-1} M0 (U(t_1) - U0)|` at the first positive sample, in the
    /// grid norm with cell width `h`.
    pub attainment: f64,
    pub attainment_time: f64,
}

fn heaviside(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t == 0.0 {
        0.5
    } else {
        0.0
    }
}

/// `(d M0 + M1 + A) U = M0 U0 delta`: solves for `V = U - 1_{[0,inf)} U0`
/// with forcing `-(M1 + A) U0 1_{[0,inf)}`.
pub fn solve_ivp(
    m0: &Coeff,
    m1: &Coeff,
    op: &SpatialOperator,
    u0: &[C64],
    grid: TimeGrid,
    nu: f64,
    h: f64,
    cfg: &SolverConfig,
) -> Result<IvpSolution> {
    let n = op.rows();
    if u0.len() != n {
        return Err(EvoError::ShapeMismatch(format!("initial state has {} entries, operator {n}", u0.len())));
    }
    let law = MaterialLaw::sum(vec![MaterialLaw::constant(n, m0.clone())?, MaterialLaw::zinv_pow(n, 1, m1.clone())?])?;
    let m0v = m0.value(n);
    let m1v = m1.value(n);
    let mut rhs = vec![c(0.0); n];
    m1v.apply(u0, &mut rhs);
    for (r, a) in rhs.iter_mut().zip(op.apply(u0)) {
        *r = -(*r + a);
    }
    let forcing = WeightedSignal::from_fn(grid, nu, n, |t, o| {
        let h = heaviside(t);
        for (o, r) in o.iter_mut().zip(&rhs) {
            *o = r * h;
        }
    });
    let p = EvoProblem::new(law, op.clone(), forcing)?;
    let mut sol = solve(&p, cfg)?;
    let times = grid.times();
    for (j, &t) in times.iter().enumerate() {
        let h = heaviside(t);
        if h != 0.0 {
            for (x, u) in sol.u.sample_mut(j).iter_mut().zip(u0) {
                *x += u * h;
            }
        }
    }
    let j1 = times.iter().position(|&t| t > 0.0).ok_or_else(|| EvoError::InvalidArgument("grid has no positive times".into()))?;
    let diff: Vec<C64> = sol.u.sample(j1).iter().zip(u0).map(|(a, b)| a - b).collect();
    let mut md = vec![c(0.0); n];
    m0v.apply(&diff, &mut md);
    let x = PatternSolver::new(&op.matrix)
        .solve(&vec![c(1.0); n], &md)
        .map_err(|_| EvoError::NotInvertible { z: c(1.0), detail: "1 + A".into() })?;
    let attainment = grid_norm(&x, h);
    Ok(IvpSolution { solution: sol, attainment, attainment_time: times[j1] })
}

/// Spatial profile of the flux lift; zero at the left end, one at the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lift {
    Ramp,
    Quadratic,
}

impl Lift {
    fn profile(self, s: f64) -> f64 {
        match self {
            Lift::Ramp => s,
            Lift::Quadratic => s * s,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BvpSolution {
    /// State `(u, q)` with the lift added back.
    pub solution: EvoSolution,
    /// Right boundary flux recovered by extrapolation, per time sample.
    #[serde(skip)]
    pub trace: Vec<f64>,
    pub max_trace_error: f64,
    pub lift: Lift,
}

/// Linear extrapolation of interior-face fluxes to the right boundary face.
pub fn neumann_trace(q: &[C64]) -> C64 {
    let k = q.len();
    match k {
        0 => c(0.0),
        1 => q[0],
        _ => q[k - 1] * 2.0 - q[k - 2],
    }
}

/// Heat-type problem on the Neumann layout with flux `g(t)` at the right end
/// and zero flux at the left.
pub fn solve_neumann_bvp(
    p: &Preset,
    g: impl Fn(f64) -> f64,
    source: Option<&WeightedSignal>,
    grid: TimeGrid,
    nu: f64,
    lift: Lift,
    cfg: &SolverConfig,
) -> Result<BvpSolution> {
    if !p.neumann {
        return invalid(format!("preset '{}' has no Neumann trace slot; use the neumann boundary", p.name));
    }
    let times = grid.times();
    let gs: Vec<f64> = times.iter().map(|&t| g(t)).collect();
    if times.iter().zip(&gs).any(|(&t, &v)| t < 0.0 && v != 0.0) {
        return invalid("boundary datum must vanish for t < 0");
    }
    if gs.iter().any(|v| !v.is_finite()) {
        return invalid("boundary datum must be bounded");
    }
    let m = p.space.m;
    let n = p.law.dim;
    let h = p.space.h();
    let faces = p.space.faces();
    let psi: Vec<f64> = faces.iter().map(|&x| lift.profile((x - p.space.a) / (p.space.b - p.space.a))).collect();
    // (0, -G) on the state layout; scalar on cells, flux on interior faces
    let neg_g = WeightedSignal::from_fn(grid, nu, n, |t, o| {
        let gt = g(t);
        for k in 0..m - 1 {
            o[m + k] = c(-gt * psi[k + 1]);
        }
    });
    let law = &p.law;
    let mut f = apply_frequency_map(&neg_g, n, |z, x, out| {
        law.evaluate(z)?.scale(z).apply(x, out);
        Ok(())
    })?;
    for (j, &gt) in gs.iter().enumerate() {
        let s = f.sample_mut(j);
        for i in 0..m {
            s[i] -= c(gt * (psi[i + 1] - psi[i]) / h);
        }
    }
    if let Some(q) = source {
        if q.dim != m {
            return Err(EvoError::ShapeMismatch(format!("source has {} components, expected {m}", q.dim)));
        }
        for j in 0..grid.n {
            let (qs, s) = (q.sample(j).to_vec(), f.sample_mut(j));
            for i in 0..m {
                s[i] += qs[i];
            }
        }
    }
    let prob = EvoProblem::new(p.law.clone(), p.op.clone(), f)?;
    let mut solution = solve(&prob, cfg)?;
    let mut trace = Vec::with_capacity(grid.n);
    let mut max_trace_error: f64 = 0.0;
    for (j, &gt) in gs.iter().enumerate() {
        let s = solution.u.sample_mut(j);
        for k in 0..m - 1 {
            s[m + k] += c(gt * psi[k + 1]);
        }
        let tr = neumann_trace(&s[m..]).re;
        max_trace_error = max_trace_error.max((tr - gt).abs());
        trace.push(tr);
    }
    Ok(BvpSolution { solution, trace, max_trace_error, lift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::{preset, PresetParams};
    use crate::signal::make_grid;
    use crate::spatial::{build_grad0_div, skew_block, SpaceGrid};
    use std::f64::consts::PI;

    fn smooth_on(t: f64) -> f64 {
        // C-infinity switch from 0 (t <= 0) to 1 (t >= 1)
        let e = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        e(t) / (e(t) + e(1.0 - t))
    }

    #[test]
    fn heat_mode_decays() {
        let m = 64;
        let sg = SpaceGrid::new(0.0, 1.0, m).unwrap();
        let (g0, _) = build_grad0_div(&sg);
        let op = skew_block(&g0).unwrap();
        let xs = sg.interior_faces();
        let mut u0 = vec![c(0.0); 2 * m - 1];
        for (k, x) in xs.iter().enumerate() {
            u0[k] = c((PI * x).sin());
        }
        let m0 = Coeff::Diag([vec![c(1.0); m - 1], vec![c(0.0); m]].concat());
        let m1 = Coeff::Diag([vec![c(0.0); m - 1], vec![c(1.0); m]].concat());
        let grid = make_grid(-1.0, 1.0 / 256.0, 2048).unwrap();
        let sol = solve_ivp(&m0, &m1, &op, &u0, grid, 4.0, sg.h(), &SolverConfig::default()).unwrap();
        let j = grid.split_index(0.5);
        let lam = 4.0 / (sg.h() * sg.h()) * (PI * sg.h() / 2.0).sin().powi(2);
        let err: f64 = xs
            .iter()
            .enumerate()
            .map(|(k, x)| (sol.solution.u.sample(j)[k].re - (-lam * 0.5).exp() * (PI * x).sin()).powi(2))
            .sum::<f64>()
            .sqrt()
            * sg.h().sqrt();
        assert!(err < 2e-3, "{err}");
        let half = make_grid(-1.0, 1.0 / 512.0, 4096).unwrap();
        let finer = solve_ivp(&m0, &m1, &op, &u0, half, 4.0, sg.h(), &SolverConfig::default()).unwrap();
        eprintln!("attainment {} {}", sol.attainment, finer.attainment);
        assert!(finer.attainment < 0.6 * sol.attainment);
        let zero = solve_ivp(&m0, &m1, &op, &vec![c(0.0); 2 * m - 1], grid, 4.0, sg.h(), &SolverConfig::default()).unwrap();
        assert_eq!(zero.solution.u.max_abs(), 0.0);
    }

    fn neumann_heat() -> Preset {
        preset("heat", &PresetParams { cells: 32, boundary: "neumann".into(), ..Default::default() }).unwrap()
    }

    #[test]
    fn neumann_zero_and_static_flux() {
        let p = neumann_heat();
        let grid = make_grid(-1.0, 1.0 / 64.0, 1024).unwrap();
        let cfg = SolverConfig::default();
        let zero = solve_neumann_bvp(&p, |_| 0.0, None, grid, 1.5, Lift::Ramp, &cfg).unwrap();
        assert_eq!(zero.solution.u.max_abs(), 0.0);
        let sol = solve_neumann_bvp(&p, smooth_on, None, grid, 1.5, Lift::Ramp, &cfg).unwrap();
        let fine = preset("heat", &PresetParams { cells: 64, boundary: "neumann".into(), ..Default::default() }).unwrap();
        let sol2 = solve_neumann_bvp(&fine, smooth_on, None, grid, 1.5, Lift::Ramp, &cfg).unwrap();
        eprintln!("trace errors {} {}", sol.max_trace_error, sol2.max_trace_error);
        assert!(sol2.max_trace_error < 0.6 * sol.max_trace_error);
        let j = grid.split_index(8.0);
        let q = &sol.solution.u.sample(j)[p.space.m..];
        for (k, x) in p.space.interior_faces().iter().enumerate() {
            assert!((q[k].re - x).abs() < 1e-3, "{k}: {} vs {x}", q[k].re);
        }
        assert!(sol.solution.residual < 1e-10);
    }

    #[test]
    fn lift_independent() {
        let p = neumann_heat();
        let grid = make_grid(-1.0, 1.0 / 64.0, 1024).unwrap();
        let cfg = SolverConfig::default();
        let g = |t: f64| smooth_on(t) * (1.0 + 0.3 * (2.0 * t).sin());
        let a = solve_neumann_bvp(&p, g, None, grid, 1.5, Lift::Ramp, &cfg).unwrap();
        let b = solve_neumann_bvp(&p, g, None, grid, 1.5, Lift::Quadratic, &cfg).unwrap();
        let d = a.solution.u.sub(&b.solution.u).unwrap().norm();
        assert!(d < 1e-10 * a.solution.u.norm(), "{d}");
        assert!(solve_neumann_bvp(&p, |t| if t < 0.0 { 1.0 } else { 0.0 }, None, grid, 1.5, Lift::Ramp, &cfg).is_err());
        let dirichlet = preset("heat", &PresetParams { cells: 8, ..Default::default() }).unwrap();
        assert!(solve_neumann_bvp(&dirichlet, g, None, grid, 1.5, Lift::Ramp, &cfg).is_err());
    }
}
