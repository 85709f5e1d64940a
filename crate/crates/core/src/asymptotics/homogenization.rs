//! Periodic cell problems on tensor grids of the unit cell, the homogenized
//! matrix, and weak limits of oscillating functions.

use serde::Serialize;

use crate::error::{invalid, EvoError, Result};
use crate::linalg::dense::{lambda_min_hermitian_part, orth};
use crate::linalg::{c, CMat, CVec, PatternSolver, SparseMat};
use crate::C64;

/// Coefficient sampled on the faces of a periodic grid of the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellCoeff {
    /// `m` cells; face `r` sits between cells `r` and `r + 1`, at `(r + 1) h`.
    D1(Vec<C64>),
    /// `m x m` cells indexed `i + m j`; `ax` on the faces between `(i, j)` and
    /// `(i + 1, j)`, `ay` between `(i, j)` and `(i, j + 1)`.
    D2 { m: usize, ax: Vec<C64>, ay: Vec<C64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellProblem {
    pub coeff: CellCoeff,
    /// Smallest sampled `Re a`.
    pub lower_bound: f64,
}

impl CellProblem {
    pub fn new(coeff: CellCoeff) -> Result<Self> {
        let (m, vals): (usize, Vec<&C64>) = match &coeff {
            CellCoeff::D1(a) => (a.len(), a.iter().collect()),
            CellCoeff::D2 { m, ax, ay } => {
                if ax.len() != m * m || ay.len() != m * m {
                    return Err(EvoError::ShapeMismatch(format!("2D cell coefficient needs {} values per direction", m * m)));
                }
                (*m, ax.iter().chain(ay).collect())
            }
        };
        if m < 2 {
            return invalid("cell grid needs at least two cells per direction");
        }
        let lower_bound = vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        if !(lower_bound > 0.0) || vals.iter().any(|v| !v.im.is_finite() || !v.re.is_finite()) {
            return Err(EvoError::InvalidCoefficient(format!("Re a must be bounded below by a positive constant (min {lower_bound:e})")));
        }
        Ok(CellProblem { coeff, lower_bound })
    }

    pub fn from_fn_1d(m: usize, a: impl Fn(f64) -> C64) -> Result<Self> {
        let h = 1.0 / m as f64;
        Self::new(CellCoeff::D1((0..m).map(|r| a(((r + 1) as f64 * h) % 1.0)).collect()))
    }

    pub fn from_fn_2d(m: usize, a: impl Fn(f64, f64) -> C64) -> Result<Self> {
        let h = 1.0 / m as f64;
        let mut ax = Vec::with_capacity(m * m);
        let mut ay = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                ax.push(a(((i + 1) as f64 * h) % 1.0, (j as f64 + 0.5) * h));
                ay.push(a((i as f64 + 0.5) * h, ((j + 1) as f64 * h) % 1.0));
            }
        }
        Self::new(CellCoeff::D2 { m, ax, ay })
    }

    pub fn dim(&self) -> usize {
        match self.coeff {
            CellCoeff::D1(_) => 1,
            CellCoeff::D2 { .. } => 2,
        }
    }

    pub fn cells_per_side(&self) -> usize {
        match &self.coeff {
            CellCoeff::D1(a) => a.len(),
            CellCoeff::D2 { m, .. } => *m,
        }
    }

    fn face_values(&self) -> Vec<C64> {
        match &self.coeff {
            CellCoeff::D1(a) => a.clone(),
            CellCoeff::D2 { ax, ay, .. } => ax.iter().chain(ay).copied().collect(),
        }
    }

    /// Direction of each face.
    fn face_dirs(&self) -> Vec<usize> {
        let m = self.cells_per_side();
        match self.coeff {
            CellCoeff::D1(_) => vec![0; m],
            CellCoeff::D2 { .. } => (0..2 * m * m).map(|f| f / (m * m)).collect(),
        }
    }

    /// Periodic gradient, faces by cells.
    fn grad(&self) -> SparseMat {
        let m = self.cells_per_side();
        let ih = m as f64;
        match self.coeff {
            CellCoeff::D1(_) => {
                let mut t = Vec::with_capacity(2 * m);
                for r in 0..m {
                    t.push((r, r, c(-ih)));
                    t.push((r, (r + 1) % m, c(ih)));
                }
                SparseMat::from_triplets(m, m, t)
            }
            CellCoeff::D2 { .. } => {
                let n = m * m;
                let idx = |i: usize, j: usize| (i % m) + m * (j % m);
                let mut t = Vec::with_capacity(4 * n);
                for j in 0..m {
                    for i in 0..m {
                        let f = idx(i, j);
                        t.push((f, idx(i, j), c(-ih)));
                        t.push((f, idx(i + 1, j), c(ih)));
                        t.push((n + f, idx(i, j), c(-ih)));
                        t.push((n + f, idx(i, j + 1), c(ih)));
                    }
                }
                SparseMat::from_triplets(2 * n, n, t)
            }
        }
    }

    fn conj(&self) -> CellProblem {
        let cj = |v: &Vec<C64>| v.iter().map(|x| x.conj()).collect::<Vec<_>>();
        let coeff = match &self.coeff {
            CellCoeff::D1(a) => CellCoeff::D1(cj(a)),
            CellCoeff::D2 { m, ax, ay } => CellCoeff::D2 { m: *m, ax: cj(ax), ay: cj(ay) },
        };
        CellProblem { coeff, lower_bound: self.lower_bound }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Corrector {
    /// `v = xi + grad w`, one value per face.
    #[serde(skip)]
    pub v: Vec<C64>,
    #[serde(skip)]
    pub w: Vec<C64>,
    /// `|div(a v)|`, relative to `|grad| |a v|`.
    pub div_residual: f64,
    /// Distance of `v - xi` from the range of the gradient (mean and, in 2D,
    /// discrete curl), relative to `|v|`.
    pub range_defect: f64,
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn xi_on_faces(p: &CellProblem, xi: &[C64]) -> Result<Vec<C64>> {
    if xi.len() != p.dim() {
        return Err(EvoError::ShapeMismatch(format!("direction has {} entries, cell dimension {}", xi.len(), p.dim())));
    }
    Ok(p.face_dirs().iter().map(|&d| xi[d]).collect())
}

fn range_defect(p: &CellProblem, g: &[C64]) -> f64 {
    let m = p.cells_per_side();
    let scale = l2(g).max(1.0);
    match p.coeff {
        CellCoeff::D1(_) => (g.iter().sum::<C64>() / m as f64).norm() / scale,
        CellCoeff::D2 { .. } => {
            let n = m * m;
            let (gx, gy) = g.split_at(n);
            let mx = gx.iter().sum::<C64>() / n as f64;
            let my = gy.iter().sum::<C64>() / n as f64;
            let idx = |i: usize, j: usize| (i % m) + m * (j % m);
            // circulation around the plaquette with lower-left cell (i, j)
            let mut curl: f64 = 0.0;
            for j in 0..m {
                for i in 0..m {
                    let circ = gx[idx(i, j)] + gy[idx(i + 1, j)] - gx[idx(i, j + 1)] - gy[idx(i, j)];
                    curl = curl.max(circ.norm());
                }
            }
            mx.norm().max(my.norm()).max(curl / m as f64) / scale
        }
    }
}

/// Solves `div(a (xi + grad w)) = 0` for periodic `w` with `w_0 = 0`.
pub fn cell_problem(p: &CellProblem, xi: &[C64]) -> Result<Corrector> {
    let xf = xi_on_faces(p, xi)?;
    let a = p.face_values();
    let g = p.grad();
    let gt = g.adjoint();
    let n = g.cols;
    let ag = SparseMat::from_triplets(g.rows, g.cols, g.triplets().map(|(i, j, v)| (i, j, a[i] * v)).collect());
    let lap = gt.matmul(&ag)?;
    let ax: Vec<C64> = a.iter().zip(&xf).map(|(x, y)| x * y).collect();
    let rhs = gt.mul_vec(&ax);
    // the equations sum to zero, so the first one is dropped with w_0
    let pinned = SparseMat::from_triplets(
        n - 1,
        n - 1,
        lap.triplets().filter(|&(i, j, _)| i > 0 && j > 0).map(|(i, j, v)| (i - 1, j - 1, v)).collect(),
    );
    let sol = PatternSolver::new(&pinned)
        .solve(&vec![c(0.0); n - 1], &rhs[1..].iter().map(|x| -x).collect::<Vec<_>>())
        .map_err(|k| EvoError::InvalidCoefficient(format!("cell system singular at unknown {k}")))?;
    let mut w = vec![c(0.0)];
    w.extend(sol);
    let gw = g.mul_vec(&w);
    let v: Vec<C64> = gw.iter().zip(&xf).map(|(x, y)| x + y).collect();
    let av: Vec<C64> = a.iter().zip(&v).map(|(x, y)| x * y).collect();
    let gnorm = 2.0 * (p.dim() as f64).sqrt() * p.cells_per_side() as f64;
    let div_residual = l2(&gt.mul_vec(&av)) / (gnorm * l2(&av)).max(f64::MIN_POSITIVE);
    let range_defect = range_defect(p, &gw);
    Ok(Corrector { v, w, div_residual, range_defect })
}

/// `xi - iota (iota^* a iota)^{-1} iota^* a xi` with `iota` an orthonormal
/// basis of the gradient range from an SVD; for small grids.
pub fn corrector_dense(p: &CellProblem, xi: &[C64]) -> Result<Vec<C64>> {
    let xf = CVec::from_vec(xi_on_faces(p, xi)?);
    let iota = orth(&p.grad().to_dense(), 1e-10);
    let a = CMat::from_diagonal(&CVec::from_vec(p.face_values()));
    let k = iota.adjoint() * &a * &iota;
    let y = k
        .lu()
        .solve(&(iota.adjoint() * &a * &xf))
        .ok_or_else(|| EvoError::InvalidCoefficient("compressed cell operator singular".into()))?;
    Ok((xf - iota * y).iter().copied().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Homogenized {
    #[serde(skip)]
    pub a_hom: CMat,
    pub entries: Vec<Vec<[f64; 2]>>,
    /// `|(a^*)_hom - (a_hom)^*|`
    pub adjoint_defect: f64,
    /// `|a_hom - a_hom^*|`
    pub hermitian_defect: f64,
    /// Smallest eigenvalue of the Hermitian part.
    pub re_lower: f64,
    pub max_div_residual: f64,
    pub max_range_defect: f64,
}

fn flux_average(p: &CellProblem, v: &[C64]) -> Vec<C64> {
    let d = p.dim();
    let a = p.face_values();
    let dirs = p.face_dirs();
    let mut acc = vec![c(0.0); d];
    for ((x, y), &k) in a.iter().zip(v).zip(&dirs) {
        acc[k] += x * y;
    }
    let per = (dirs.len() / d) as f64;
    acc.into_iter().map(|s| s / per).collect()
}

fn hom_matrix(p: &CellProblem) -> Result<(CMat, f64, f64)> {
    let d = p.dim();
    let mut out = CMat::zeros(d, d);
    let (mut res, mut rng): (f64, f64) = (0.0, 0.0);
    for j in 0..d {
        let mut xi = vec![c(0.0); d];
        xi[j] = c(1.0);
        let cor = cell_problem(p, &xi)?;
        res = res.max(cor.div_residual);
        rng = rng.max(cor.range_defect);
        for (i, f) in flux_average(p, &cor.v).into_iter().enumerate() {
            out[(i, j)] = f;
        }
    }
    Ok((out, res, rng))
}

/// Columns `int_Y a v_{e_j}`.
pub fn homogenized_matrix(p: &CellProblem) -> Result<Homogenized> {
    let (a_hom, max_div_residual, max_range_defect) = hom_matrix(p)?;
    let (adj, _, _) = hom_matrix(&p.conj())?;
    let adjoint_defect = (adj - a_hom.adjoint()).norm();
    let hermitian_defect = (&a_hom - a_hom.adjoint()).norm();
    let re_lower = lambda_min_hermitian_part(&a_hom);
    if !(re_lower > 0.0) {
        return Err(EvoError::InvalidCoefficient(format!("homogenized matrix not positive ({re_lower:e})")));
    }
    let entries = (0..a_hom.nrows()).map(|i| (0..a_hom.ncols()).map(|j| [a_hom[(i, j)].re, a_hom[(i, j)].im]).collect()).collect();
    Ok(Homogenized { a_hom, entries, adjoint_defect, hermitian_defect, re_lower, max_div_residual, max_range_defect })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakLimitReport {
    /// `(int_Y f) (int g)`
    pub limit: f64,
    /// `(n, int f(n x) g(x) dx, |pairing - limit|)`
    pub rows: Vec<(usize, f64, f64)>,
}

/// Pairings of `f(n .)` with `g`, both piecewise constant: `f` on a uniform
/// grid of `[0, 1)`, `g` on a uniform grid of `[a, b]`. Overlaps are
/// integrated exactly through the antiderivative of `f`.
pub fn weak_limit_mean(f: &[f64], g: &[f64], a: f64, b: f64, n_list: &[usize]) -> Result<WeakLimitReport> {
    if f.is_empty() || g.is_empty() || !(b > a) {
        return invalid("weak limit needs nonempty samples and a nonempty window");
    }
    let p = f.len();
    let mean = f.iter().sum::<f64>() / p as f64;
    let mut cum = vec![0.0; p + 1];
    for i in 0..p {
        cum[i + 1] = cum[i] + f[i] / p as f64;
    }
    // antiderivative of the periodic extension
    let big_f = |y: f64| {
        let k = y.floor();
        let r = (y - k) * p as f64;
        let i = (r.floor() as usize).min(p - 1);
        k * mean + cum[i] + (r - i as f64) * f[i] / p as f64
    };
    let hg = (b - a) / g.len() as f64;
    let gint = g.iter().sum::<f64>() * hg;
    let limit = mean * gint;
    let rows = n_list
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let s: f64 = g
                .iter()
                .enumerate()
                .map(|(i, gi)| {
                    let (x0, x1) = (a + i as f64 * hg, a + (i + 1) as f64 * hg);
                    gi * (big_f(nf * x1) - big_f(nf * x0)) / nf
                })
                .sum();
            (n, s, (s - limit).abs())
        })
        .collect();
    Ok(WeakLimitReport { limit, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn harmonic(a: &[C64]) -> C64 {
        c(a.len() as f64) / a.iter().map(|x| 1.0 / x).sum::<C64>()
    }

    #[test]
    fn constant_coefficient_has_no_corrector() {
        let p = CellProblem::from_fn_1d(64, |_| c(2.5)).unwrap();
        let cor = cell_problem(&p, &[c(1.0)]).unwrap();
        assert!(cor.v.iter().all(|v| (v - 1.0).norm() == 0.0));
        assert_eq!(homogenized_matrix(&p).unwrap().a_hom[(0, 0)], c(2.5));
        let q = CellProblem::from_fn_2d(8, |_, _| c(3.0)).unwrap();
        let h = homogenized_matrix(&q).unwrap();
        assert!((h.a_hom.clone() - CMat::identity(2, 2) * c(3.0)).norm() < 1e-14);
    }

    #[test]
    fn two_phase_flux_is_constant() {
        let p = CellProblem::from_fn_1d(128, |x| c(if x < 0.5 { 1.0 } else { 4.0 })).unwrap();
        let cor = cell_problem(&p, &[c(1.0)]).unwrap();
        let a = p.face_values();
        let flux: Vec<C64> = a.iter().zip(&cor.v).map(|(x, y)| x * y).collect();
        assert!(flux.iter().all(|q| (q - flux[0]).norm() < 1e-12));
        assert!((flux[0] - 1.6).norm() < 1e-12);
        assert!(cor.div_residual < 1e-12 && cor.range_defect < 1e-12);
    }

    #[test]
    fn dense_cross_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = CellProblem::new(CellCoeff::D1((0..32).map(|_| C64::new(rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0))).collect())).unwrap();
        let v = cell_problem(&p, &[c(1.0)]).unwrap().v;
        let vd = corrector_dense(&p, &[c(1.0)]).unwrap();
        assert!(v.iter().zip(&vd).all(|(x, y)| (x - y).norm() < 1e-10));
        let q = CellProblem::from_fn_2d(6, |x, y| c(1.5 + (2.0 * PI * x).sin() * (2.0 * PI * y).cos())).unwrap();
        let v = cell_problem(&q, &[c(0.3), c(-1.0)]).unwrap().v;
        let vd = corrector_dense(&q, &[c(0.3), c(-1.0)]).unwrap();
        assert!(v.iter().zip(&vd).all(|(x, y)| (x - y).norm() < 1e-10));
    }

    #[test]
    fn laminate_in_two_dimensions() {
        let p = CellProblem::from_fn_2d(32, |x, _| c(if x < 0.5 { 1.0 } else { 4.0 })).unwrap();
        let h = homogenized_matrix(&p).unwrap();
        assert!((h.a_hom[(0, 0)] - 1.6).norm() < 1e-10);
        assert!((h.a_hom[(1, 1)] - 2.5).norm() < 1e-10);
        assert!(h.a_hom[(0, 1)].norm() < 1e-10 && h.a_hom[(1, 0)].norm() < 1e-10);
        assert!(h.max_div_residual < 1e-8 && h.max_range_defect < 1e-8);
    }

    #[test]
    fn hermitian_coefficients_give_hermitian_limit() {
        let p = CellProblem::from_fn_2d(16, |x, y| c(2.0 + (2.0 * PI * (x + 2.0 * y)).cos())).unwrap();
        let h = homogenized_matrix(&p).unwrap();
        assert!(h.hermitian_defect < 1e-10, "{}", h.hermitian_defect);
        assert!(h.adjoint_defect < 1e-10);
        let q = CellProblem::from_fn_2d(12, |x, y| C64::new(2.0 + (2.0 * PI * x).cos(), (2.0 * PI * y).sin())).unwrap();
        assert!(homogenized_matrix(&q).unwrap().adjoint_defect < 1e-10);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(matches!(CellProblem::from_fn_1d(8, |x| c(x - 0.5)), Err(EvoError::InvalidCoefficient(_))));
    }

    #[test]
    fn weak_limits() {
        let p = 256;
        let sinf: Vec<f64> = (0..p).map(|i| (2.0 * PI * (i as f64 + 0.5) / p as f64).sin()).collect();
        let r = weak_limit_mean(&sinf, &[1.0], 0.0, 0.7, &[4, 8, 16, 32, 64]).unwrap();
        assert!(r.limit.abs() < 1e-14);
        for (n, _, gap) in &r.rows {
            assert!(*gap <= 0.5 / *n as f64, "{n} {gap}");
        }
        let r = weak_limit_mean(&[2.0], &[1.0, 3.0], 0.0, 1.0, &[1, 3, 7]).unwrap();
        assert!(r.rows.iter().all(|row| row.2 < 1e-14));
        let half: Vec<f64> = (0..2).map(|i| i as f64).collect();
        let gs: Vec<f64> = (0..1000).map(|i| ((i as f64 + 0.5) / 1000.0 * 2.0).exp()).collect();
        let r = weak_limit_mean(&half, &gs, 0.0, 2.0, &[1000]).unwrap();
        let gint = gs.iter().sum::<f64>() * 2.0 / 1000.0;
        assert!((r.limit - 0.5 * gint).abs() < 1e-12);
        assert!(r.rows[0].2 < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn hom_between_means(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<C64> = (0..64).map(|_| c(rng.gen_range(0.1..10.0))).collect();
            let p = CellProblem::new(CellCoeff::D1(a.clone())).unwrap();
            let ah = homogenized_matrix(&p).unwrap().a_hom[(0, 0)].re;
            let arith = a.iter().map(|x| x.re).sum::<f64>() / 64.0;
            prop_assert!((ah - harmonic(&a).re).abs() < 1e-10 * ah);
            prop_assert!(ah <= arith * (1.0 + 1e-12));
        }
    }
}
