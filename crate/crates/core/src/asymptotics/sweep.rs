//! Memory series from moments, and sweeps over the oscillation parameter.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::homogenization::{homogenized_matrix, CellProblem};
use crate::error::{invalid, EvoError, Result};
use crate::evo::{solve, EvoProblem, SolverConfig};
use crate::linalg::c;
use crate::material::{Coeff, MaterialLaw};
use crate::signal::{make_grid, TimeGrid, WeightedSignal};
use crate::spatial::{build_periodic_grad, skew_block, SpaceGrid};
use crate::time_ops::integrate_spectral;
use crate::transform::apply_frequency_map;
use crate::C64;

#[derive(Debug, Clone, Serialize)]
pub struct WotSeries {
    #[serde(skip)]
    pub u: WeightedSignal,
    /// `q^{K+1} / (1 - q)` with `q = L / nu`.
    pub tail_bound: f64,
    pub terms: usize,
}

/// `sum_{k<=K} (-d^{-1})^k C_k d^{-1} f`, with `L` bounding every `|B_n|`.
pub fn wot_limit_series(moments: &[Coeff], f: &WeightedSignal, k: usize, bound: f64) -> Result<WotSeries> {
    if moments.len() < k + 1 {
        return invalid(format!("need moments C_0..C_{k}, got {}", moments.len()));
    }
    if !(f.nu > 2.0 * bound) {
        return Err(EvoError::ContractionViolation { nu: f.nu, lipschitz: 2.0 * bound });
    }
    let vals: Vec<_> = moments[..=k].iter().map(|m| m.value(f.dim)).collect();
    let u = apply_frequency_map(f, f.dim, |z, x, out| {
        let zi = 1.0 / z;
        let mut tmp = vec![c(0.0); x.len()];
        out.iter_mut().for_each(|o| *o = c(0.0));
        let mut p = zi;
        for v in &vals {
            v.apply(x, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += p * t;
            }
            p *= -zi;
        }
        Ok(())
    })?;
    let q = bound / f.nu;
    Ok(WotSeries { u, tail_bound: q.powi(k as i32 + 1) / (1.0 - q), terms: k + 1 })
}

/// Periodic trapezoid nodes `sin(2 pi j / n)`.
fn sin_nodes(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |j| (2.0 * PI * j as f64 / n as f64).sin())
}

/// `int_0^1 sin(2 pi y)^k dy`, `k = 0..=kmax`.
pub fn sin_moments(kmax: usize, points: usize) -> Vec<f64> {
    (0..=kmax).map(|k| sin_nodes(points).map(|s| s.powi(k as i32)).sum::<f64>() / points as f64).collect()
}

/// `J(s) = int_0^1 e^{s sin(2 pi y)} dy`, the modified Bessel function `I_0`.
pub fn bessel_j(s: f64, points: usize) -> f64 {
    sin_nodes(points).map(|b| (s * b).exp()).sum::<f64>() / points as f64
}

/// `int_0^t J(-(t - s)) ds`, with the time integral taken in closed form
/// under the same trapezoid rule in `y`.
pub fn sin_memory_reference(t: f64, points: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    sin_nodes(points).map(|b| if b == 0.0 { t } else { -(-t * b).exp_m1() / b }).sum::<f64>() / points as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepParams {
    pub grid: TimeGrid,
    pub nu: f64,
    /// Periodic cells on `[0, 1)`.
    pub cells: usize,
    pub a_lo: f64,
    pub a_hi: f64,
    /// Quadrature nodes in `y` for moments and the Bessel reference.
    pub quad_points: usize,
    pub series_terms: usize,
}

impl SweepParams {
    pub fn wave() -> Self {
        SweepParams {
            grid: make_grid(-1.0, 1.0 / 64.0, 1024).expect("valid grid"),
            nu: 2.0,
            cells: 1024,
            a_lo: 1.0,
            a_hi: 4.0,
            quad_points: 2048,
            series_terms: 20,
        }
    }

    pub fn sin_memory() -> Self {
        // the step forcing limits the time accuracy to O(dt^{3/2})
        SweepParams { grid: make_grid(-1.0, 1.0 / 256.0, 4096).expect("valid grid"), nu: 3.0, cells: 16384, ..Self::wave() }
    }

    pub fn for_problem(id: &str) -> Result<Self> {
        match id {
            "wave-periodic" => Ok(Self::wave()),
            "ode-sin-memory" => Ok(Self::sin_memory()),
            _ => Err(EvoError::UnknownProblem(id.into())),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    /// Relative `|u_n - u_ref|_{2,nu}`.
    pub error: f64,
    /// Against the moment series (memory problem only).
    pub series_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub problem: String,
    pub params: SweepParams,
    pub rows: Vec<SweepRow>,
    /// `a_hom` for the wave problem, series tail bound for the memory problem.
    pub reference_value: f64,
}

impl SweepTable {
    /// Columns `n,error,series_error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,error,series_error")?;
        for r in &self.rows {
            let s = r.series_error.map_or(String::new(), |v| format!("{v:e}"));
            writeln!(w, "{},{:e},{}", r.n, r.error, s)?;
        }
        Ok(())
    }
}

fn rel_error(u: &WeightedSignal, r: &WeightedSignal) -> Result<f64> {
    let n = r.norm();
    let d = u.sub(r)?.norm();
    Ok(if n > 0.0 { d / n } else { d })
}

pub fn oscillation_sweep(id: &str, n_list: &[usize], params: &SweepParams) -> Result<SweepTable> {
    if n_list.is_empty() || n_list.iter().any(|&n| n == 0) {
        return invalid("oscillation counts must be positive");
    }
    match id {
        "wave-periodic" => wave_sweep(n_list, params),
        "ode-sin-memory" => sin_memory_sweep(n_list, params),
        _ => Err(EvoError::UnknownProblem(id.into())),
    }
}

/// Right-hand side of the memory problem, `e^{cos(2 pi x)}`.
fn memory_profile(x: f64) -> f64 {
    (2.0 * PI * x).cos().exp()
}

/// `(d + sin(2 pi n x)) u = 1_{[0, inf)} f(x)` on a periodic `x` grid, averaged
/// over `x`. The multiplication operator is diagonal, so the per-point
/// solves are summed in the frequency domain before one inverse transform.
fn sin_memory_average(n: usize, heav: &WeightedSignal, cells: usize) -> Result<WeightedSignal> {
    let xs: Vec<(f64, f64)> = (0..cells)
        .map(|j| {
            let x = j as f64 / cells as f64;
            (memory_profile(x), (2.0 * PI * ((n * j) % cells) as f64 / cells as f64).sin())
        })
        .collect();
    apply_frequency_map(heav, 1, |z, x, out| {
        let s: C64 = xs.iter().map(|&(f, b)| f / (z + b)).sum::<C64>() / cells as f64;
        out[0] = x[0] * s;
        Ok(())
    })
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

fn sin_memory_sweep(n_list: &[usize], p: &SweepParams) -> Result<SweepTable> {
    if n_list.iter().any(|&n| p.cells % n != 0 || p.cells / n < 16) {
        return invalid("x grid must hold at least 16 points per period and be divisible by n");
    }
    let heav = WeightedSignal::from_real_fn(p.grid, p.nu, heaviside);
    let fmean = (0..p.quad_points).map(|j| memory_profile(j as f64 / p.quad_points as f64)).sum::<f64>() / p.quad_points as f64;
    let reference = WeightedSignal::from_real_fn(p.grid, p.nu, |t| fmean * sin_memory_reference(t, p.quad_points));
    let moments: Vec<Coeff> = sin_moments(p.series_terms, p.quad_points).into_iter().map(|m| Coeff::Scalar(c(m))).collect();
    let series = wot_limit_series(&moments, &heav.scale(c(fmean)), p.series_terms, 1.0)?;
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let u = sin_memory_average(n, &heav, p.cells)?;
            Ok(SweepRow { n, error: rel_error(&u, &reference)?, series_error: Some(rel_error(&u, &series.u)?) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { problem: "ode-sin-memory".into(), params: p.clone(), rows, reference_value: series.tail_bound })
}

fn two_phase(p: &SweepParams) -> impl Fn(f64) -> f64 + '_ {
    move |y: f64| if y.rem_euclid(1.0) < 0.5 { p.a_lo } else { p.a_hi }
}

/// Displacement of `d^2 u - div(a grad u) = f` on the periodic unit interval,
/// written as a first-order system in velocity and flux.
fn wave_displacement(a_faces: &[f64], p: &SweepParams, sg: &SpaceGrid) -> Result<WeightedSignal> {
    let m = p.cells;
    let law = MaterialLaw::block_diag(vec![
        MaterialLaw::identity(m),
        MaterialLaw::constant(m, Coeff::Diag(a_faces.iter().map(|a| c(1.0 / a)).collect()))?,
    ])?;
    let op = skew_block(&build_periodic_grad(sg))?;
    let centers = sg.centers();
    let f = WeightedSignal::from_fn(p.grid, p.nu, 2 * m, |t, o| {
        let g = (-(t - 1.0).powi(2) / 0.125).exp();
        for (k, x) in centers.iter().enumerate() {
            o[k] = c(g * (2.0 * PI * x).cos());
        }
    });
    let sol = solve(&EvoProblem::new(law, op, f)?, &SolverConfig::default())?;
    integrate_spectral(&sol.u.slice_components(0..m))
}

fn wave_sweep(n_list: &[usize], p: &SweepParams) -> Result<SweepTable> {
    let sg = SpaceGrid::new(0.0, 1.0, p.cells)?;
    let a = two_phase(p);
    let cell = CellProblem::from_fn_1d(p.cells, |y| c(a(y)))?;
    let a_hom = homogenized_matrix(&cell)?.a_hom[(0, 0)].re;
    let reference = wave_displacement(&vec![a_hom; p.cells], p, &sg)?;
    let h = sg.h();
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let faces: Vec<f64> = (0..p.cells).map(|r| a(n as f64 * (r + 1) as f64 * h)).collect();
            let u = wave_displacement(&faces, p, &sg)?;
            Ok(SweepRow { n, error: rel_error(&u, &reference)?, series_error: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { problem: "wave-periodic".into(), params: p.clone(), rows, reference_value: a_hom })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time_ops::integrate_spectral;

    #[test]
    fn moments_and_bessel() {
        let m = sin_moments(6, 2048);
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!((m[2] - 0.5).abs() < 1e-14 && (m[4] - 0.375).abs() < 1e-14);
        assert!(m[1].abs() < 1e-14 && m[3].abs() < 1e-14);
        // I_0(1)
        assert!((bessel_j(1.0, 2048) - 1.2660658777520082).abs() < 1e-14);
        assert!((bessel_j(-2.0, 2048) - bessel_j(2.0, 2048)).abs() < 1e-13);
        // derivative of the reference is J
        let (t, d) = (1.3, 1e-5);
        let fd = (sin_memory_reference(t + d, 2048) - sin_memory_reference(t - d, 2048)) / (2.0 * d);
        assert!((fd - bessel_j(-t, 2048)).abs() < 1e-8);
    }

    #[test]
    fn series_special_cases() {
        let g = make_grid(-1.0, 1.0 / 64.0, 1024).unwrap();
        let f = WeightedSignal::from_real_fn(g, 3.0, |t| (-(t - 1.0).powi(2)).exp());
        let only0 = wot_limit_series(&[Coeff::Scalar(c(1.0))], &f, 0, 1.0).unwrap();
        let i = integrate_spectral(&f).unwrap();
        assert!(only0.u.sub(&i).unwrap().norm() < 1e-14 * i.norm());
        // constant B: resums to (d + B)^{-1}
        let b: f64 = 0.7;
        let mom: Vec<Coeff> = (0..=40).map(|k| Coeff::Scalar(c(b.powi(k)))).collect();
        let s = wot_limit_series(&mom, &f, 40, b).unwrap();
        let exact = crate::transform::apply_symbol(&f, |z| 1.0 / (z + b));
        assert!(s.u.sub(&exact).unwrap().norm() <= (s.tail_bound + 1e-13) * exact.norm() * 3.0);
        assert!(matches!(wot_limit_series(&mom, &f.with_nu(1.0), 40, b), Err(EvoError::ContractionViolation { .. })));
    }

    #[test]
    fn sin_memory_gap_shrinks() {
        let p = SweepParams { cells: 1024, ..SweepParams::sin_memory() };
        let t = oscillation_sweep("ode-sin-memory", &[1, 2, 4, 8], &p).unwrap();
        let errs: Vec<f64> = t.rows.iter().map(|r| r.series_error.unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 1e-3);
    }

    #[test]
    fn constant_wave_has_zero_error() {
        let p = SweepParams { cells: 64, a_lo: 2.0, a_hi: 2.0, ..SweepParams::wave() };
        let t = oscillation_sweep("wave-periodic", &[1], &p).unwrap();
        assert_eq!(t.rows[0].error, 0.0);
        assert!(matches!(oscillation_sweep("nope", &[1], &p), Err(EvoError::UnknownProblem(_))));
    }
}
