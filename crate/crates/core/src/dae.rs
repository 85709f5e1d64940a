//! Finite-dimensional pairs `d(M0 u) + M1 u = 0`: spectrum, regularity,
//! normal form, index, Wong sequence, Drazin inverse and trajectories.
//!
//! The invertible/nilpotent split uses a reordered Schur form of
//! `J = (lam M0 + M1)^{-1} M0` and a triangular Sylvester solve; no Jordan
//! form is ever computed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{EvoError, Result};
use crate::linalg::dense::{
    inverse, leading_left, null_space, orth, orth_scaled, pinv, reorder_schur, schur, sigma_min, spectral_norm, subspace_distance,
    sylvester_upper,
};
use crate::linalg::{c, CMat};
use crate::signal::{make_grid, WeightedSignal};
use crate::transform::forward;
use crate::C64;

pub const DEFAULT_TOL: f64 = 1e-8;
/// Smallest admissible ratio between the smallest kept and the largest
/// clustered eigenvalue modulus.
pub const GAP_RATIO: f64 = 10.0;
const SEED: u64 = 0x5eed_da3;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPair {
    pub m0: CMat,
    pub m1: CMat,
}

impl MatrixPair {
    pub fn new(m0: CMat, m1: CMat) -> Result<Self> {
        if !m0.is_square() || m0.shape() != m1.shape() {
            return Err(EvoError::ShapeMismatch(format!("pair shapes {:?} and {:?}", m0.shape(), m1.shape())));
        }
        Ok(MatrixPair { m0, m1 })
    }

    pub fn from_real(n: usize, m0: &[f64], m1: &[f64]) -> Result<Self> {
        if m0.len() != n * n || m1.len() != n * n {
            return Err(EvoError::ShapeMismatch(format!("expected {} entries per matrix", n * n)));
        }
        let f = |d: &[f64]| CMat::from_row_slice(n, n, &d.iter().map(|&x| c(x)).collect::<Vec<_>>());
        MatrixPair::new(f(m0), f(m1))
    }

    pub fn n(&self) -> usize {
        self.m0.nrows()
    }

    pub fn pencil(&self, z: C64) -> CMat {
        &self.m0 * z + &self.m1
    }

    fn scale(&self) -> f64 {
        spectral_norm(&self.m0) + spectral_norm(&self.m1)
    }

    pub fn commutes(&self, tol: f64) -> bool {
        let d = (&self.m0 * &self.m1 - &self.m1 * &self.m0).norm();
        d <= tol * (self.m0.norm() * self.m1.norm()).max(f64::MIN_POSITIVE)
    }
}

/// Regularity sample: 16 random points on a circle of radius
/// `1 + |M0| + |M1|`; returns the best-conditioned point if any is regular.
fn regular_point(p: &MatrixPair) -> Option<C64> {
    let n = p.n();
    if n == 0 {
        return Some(c(1.0));
    }
    let r = 1.0 + p.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut best: Option<(f64, C64)> = None;
    for _ in 0..16 {
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let z = C64::from_polar(r, th);
        let s = sigma_min(&p.pencil(z)) / (r * spectral_norm(&p.m0) + spectral_norm(&p.m1)).max(f64::MIN_POSITIVE);
        if s > 1e-12 && best.map_or(true, |(b, _)| s > b) {
            best = Some((s, z));
        }
    }
    best.map(|(_, z)| z)
}

pub fn is_regular(p: &MatrixPair) -> bool {
    regular_point(p).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum PairSpectrum {
    Finite(Vec<[f64; 2]>),
    WholePlane,
}

/// Ordered Schur split of an `n x n` matrix into a block with eigenvalues
/// away from zero and a trailing nearly nilpotent block, then block
/// diagonalized: `a = w diag(t11, t22) w^{-1}`.
struct CoreNilpotent {
    w: CMat,
    w_inv: CMat,
    t11: CMat,
    t22: CMat,
    gap: f64,
}

/// Splits off the `nil` smallest-modulus eigenvalues; the size comes from
/// subspace arithmetic (Wong limit), the Schur form only orders them.
fn core_nilpotent(a: &CMat, nil: usize) -> Result<CoreNilpotent> {
    let n = a.nrows();
    let (mut z, mut t) = schur(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| t[(i, i)].norm().partial_cmp(&t[(j, j)].norm()).unwrap());
    let mods: Vec<f64> = order.iter().map(|&i| t[(i, i)].norm()).collect();
    let mut flags = vec![false; n];
    for &i in order.iter().take(nil) {
        flags[i] = true;
    }
    let gap = if nil == 0 || nil == n {
        f64::INFINITY
    } else if mods[nil - 1] == 0.0 {
        f64::INFINITY
    } else {
        mods[nil] / mods[nil - 1]
    };
    if gap < GAP_RATIO {
        return Err(EvoError::ToleranceConflict { gap });
    }
    reorder_schur(&mut t, &mut z, &flags);
    let k = n - nil;
    let t11 = t.view((0, 0), (k, k)).into_owned();
    let t12 = t.view((0, k), (k, nil)).into_owned();
    let t22 = t.view((k, k), (nil, nil)).into_owned();
    let x = sylvester_upper(&t11, &t22, &(-t12));
    let mut s = CMat::identity(n, n);
    s.view_mut((0, k), (k, nil)).copy_from(&x);
    let mut s_inv = CMat::identity(n, n);
    s_inv.view_mut((0, k), (k, nil)).copy_from(&(-x));
    let w = &z * s;
    let w_inv = s_inv * z.adjoint();
    Ok(CoreNilpotent { w, w_inv, t11, t22, gap })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeierstrassData {
    #[serde(skip)]
    pub p: CMat,
    #[serde(skip)]
    pub q: CMat,
    #[serde(skip)]
    pub c: CMat,
    #[serde(skip)]
    pub nil: CMat,
    /// Size of the differential block.
    pub k: usize,
    pub lambda: [f64; 2],
    /// `|P M0 Q - diag(I, N)|`
    pub residual_m0: f64,
    /// `|P M1 Q - diag(C, I)|`
    pub residual_m1: f64,
    pub gap: f64,
}

impl WeierstrassData {
    pub fn nilpotency(&self) -> usize {
        nilpotency_degree(&self.nil)
    }
}

fn nilpotency_degree(nm: &CMat) -> usize {
    let s = nm.nrows();
    if s == 0 {
        return 1;
    }
    let scale = spectral_norm(nm).max(1.0);
    let mut pw = nm.clone();
    for l in 1..=s {
        if spectral_norm(&pw) <= 1e-8 * scale.powi(l as i32) {
            return l;
        }
        pw = &pw * nm;
    }
    s
}

fn not_regular_lambda(p: &MatrixPair) -> Result<C64> {
    regular_point(p).ok_or(EvoError::NotRegular)
}

pub fn weierstrass_form(p: &MatrixPair, _tol: f64) -> Result<WeierstrassData> {
    let n = p.n();
    let lam = not_regular_lambda(p)?;
    let base = inverse(&p.pencil(lam)).ok_or(EvoError::NotRegular)?;
    let j = &base * &p.m0;
    let cn = core_nilpotent(&j, nilpotent_size(p))?;
    let k = cn.t11.nrows();
    let s = n - k;
    let t11_inv = inverse(&cn.t11).ok_or(EvoError::ToleranceConflict { gap: cn.gap })?;
    let lower = CMat::identity(s, s) - &cn.t22 * lam;
    let lower_inv = inverse(&lower).ok_or(EvoError::ToleranceConflict { gap: cn.gap })?;
    let mut d = CMat::zeros(n, n);
    d.view_mut((0, 0), (k, k)).copy_from(&t11_inv);
    d.view_mut((k, k), (s, s)).copy_from(&lower_inv);
    let pm = d * &cn.w_inv * base;
    let q = cn.w.clone();
    let cm = &t11_inv - CMat::identity(k, k) * lam;
    let nil = &lower_inv * &cn.t22;
    let mut e0 = CMat::zeros(n, n);
    e0.view_mut((0, 0), (k, k)).fill_with_identity();
    e0.view_mut((k, k), (s, s)).copy_from(&nil);
    let mut e1 = CMat::identity(n, n);
    e1.view_mut((0, 0), (k, k)).copy_from(&cm);
    let residual_m0 = (&pm * &p.m0 * &q - e0).norm();
    let residual_m1 = (&pm * &p.m1 * &q - e1).norm();
    Ok(WeierstrassData { p: pm, q, c: cm, nil, k, lambda: [lam.re, lam.im], residual_m0, residual_m1, gap: cn.gap })
}

/// Roots of `det(z M0 + M1)`, or the whole plane for a singular pencil.
pub fn pair_spectrum(p: &MatrixPair) -> Result<PairSpectrum> {
    let lam = match regular_point(p) {
        Some(z) => z,
        None => return Ok(PairSpectrum::WholePlane),
    };
    let j = inverse(&p.pencil(lam)).ok_or(EvoError::NotRegular)? * &p.m0;
    let cn = core_nilpotent(&j, nilpotent_size(p))?;
    let mut out: Vec<[f64; 2]> = (0..cn.t11.nrows())
        .map(|i| {
            let z = lam - c(1.0) / cn.t11[(i, i)];
            [z.re, z.im]
        })
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(PairSpectrum::Finite(out))
}

/// Degree of `det(z M0 + M1)` from its values on the unit circle.
pub fn det_degree(p: &MatrixPair) -> usize {
    let n = p.n();
    let pts = n + 1;
    let vals: Vec<C64> = (0..pts)
        .map(|k| {
            let z = C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / pts as f64);
            p.pencil(z).determinant()
        })
        .collect();
    let coeffs: Vec<f64> = (0..pts)
        .map(|j| {
            let s: C64 = (0..pts)
                .map(|k| vals[k] * C64::from_polar(1.0, -std::f64::consts::TAU * (j * k) as f64 / pts as f64))
                .sum();
            (s / pts as f64).norm()
        })
        .collect();
    let top = coeffs.iter().cloned().fold(0.0, f64::max);
    (0..pts).rev().find(|&j| coeffs[j] > 1e-8 * top).unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub index: usize,
    pub resolvent_index: usize,
    pub radii: Vec<f64>,
    /// `max_theta |(z M0 + M1)^{-1}|` at each radius.
    pub resolvent_norms: Vec<f64>,
}

const INDEX_RADII: [f64; 4] = [1e1, 1e2, 1e3, 1e4];

/// Nilpotency degree of `N`, cross-checked against the growth order of the
/// resolvent at infinity. Pairs without algebraic part have index 1.
pub fn pair_index(p: &MatrixPair) -> Result<IndexReport> {
    let w = weierstrass_form(p, DEFAULT_TOL)?;
    let index = w.nilpotency();
    let mut norms = Vec::new();
    for &r in &INDEX_RADII {
        let mut best: f64 = 0.0;
        for th in [-1.0f64, 0.0, 1.0] {
            let z = C64::from_polar(r, th);
            let inv = inverse(&p.pencil(z)).ok_or(EvoError::NotRegular)?;
            best = best.max(spectral_norm(&inv));
        }
        norms.push(best);
    }
    let slope = (norms[3] / norms[2]).log10();
    let resolvent_index = (slope.round() as i64 + 1).max(1) as usize;
    if resolvent_index != index {
        return Err(EvoError::NumericalAmbiguity { weierstrass: index, resolvent: resolvent_index });
    }
    Ok(IndexReport { index, resolvent_index, radii: INDEX_RADII.to_vec(), resolvent_norms: norms })
}

#[derive(Debug, Clone, Serialize)]
pub struct WongData {
    #[serde(skip)]
    pub bases: Vec<CMat>,
    pub dims: Vec<usize>,
    /// First `k` with `IV_{k+1} = IV_k`.
    pub stabilization: usize,
    /// Largest distance to `ran J^j` (leading singular subspace of the same
    /// dimension), when the pair is regular.
    pub range_check: Option<f64>,
}

impl WongData {
    pub fn limit(&self) -> &CMat {
        self.bases.last().expect("nonempty")
    }
}

/// Rank tolerance of the Wong subspace arithmetic, relative to the largest
/// singular value, and the absolute scale it is measured against.
fn rel_tol(p: &MatrixPair) -> (f64, f64) {
    (DEFAULT_TOL, p.scale().max(1.0))
}

fn wong_bases(p: &MatrixPair) -> (Vec<CMat>, usize) {
    let n = p.n();
    let (tol, scale) = rel_tol(p);
    let mut bases = vec![CMat::identity(n, n)];
    for k in 0..=n {
        let cur = &bases[k];
        let img = if cur.ncols() == 0 { CMat::zeros(n, 0) } else { orth_scaled(&(&p.m0 * cur), tol, scale) };
        let proj = CMat::identity(n, n) - &img * img.adjoint();
        let next = null_space(&(proj * &p.m1), tol, scale);
        let same = next.ncols() == cur.ncols();
        bases.push(next);
        if same {
            return (bases, k);
        }
    }
    (bases, n)
}

/// Size of the nilpotent block: codimension of the Wong limit.
fn nilpotent_size(p: &MatrixPair) -> usize {
    let (bases, _) = wong_bases(p);
    p.n() - bases.last().map_or(0, |b| b.ncols())
}

/// `IV_0 = C^n`, `IV_{k+1} = M1^{-1}[M0[IV_k]]`.
pub fn wong_sequence(p: &MatrixPair) -> WongData {
    let n = p.n();
    let (bases, stabilization) = wong_bases(p);
    let dims = bases.iter().map(|b| b.ncols()).collect();
    // evaluated one unit right of the finite spectrum, where the core
    // eigenvalues of J stay of order one
    let range_check = match pair_spectrum(p) {
        Ok(PairSpectrum::Finite(sp)) => {
            let z = c(sp.iter().map(|v| v[0]).fold(0.0, f64::max) + 1.0);
            inverse(&p.pencil(z)).map(|inv| {
                let j = inv * &p.m0;
                let mut pw = CMat::identity(n, n);
                let mut worst: f64 = 0.0;
                for b in &bases {
                    worst = worst.max(subspace_distance(b, &leading_left(&pw, b.ncols())));
                    pw = &pw * &j;
                }
                worst
            })
        }
        _ => None,
    };
    WongData { bases, dims, stabilization, range_check }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistentSpace {
    #[serde(skip)]
    pub basis: CMat,
    pub dim: usize,
    /// Distance to the limit of the Wong sequence.
    pub wong_distance: f64,
    /// Smallest singular value of `M0` on the space.
    pub m0_sigma_min: f64,
}

pub fn consistent_subspace(p: &MatrixPair) -> Result<ConsistentSpace> {
    let w = weierstrass_form(p, DEFAULT_TOL)?;
    let basis = orth(&w.q.columns(0, w.k).into_owned(), 1e-12);
    let wong = wong_sequence(p);
    let wong_distance = subspace_distance(&basis, wong.limit());
    // the split basis carries the conditioning of the block diagonalization
    let cond = inverse(&w.q).map_or(f64::INFINITY, |qi| spectral_norm(&w.q) * spectral_norm(&qi));
    if wong_distance > DEFAULT_TOL * cond.max(1.0) {
        return Err(EvoError::NumericalAmbiguity { weierstrass: basis.ncols(), resolvent: wong.limit().ncols() });
    }
    let m0_sigma_min = if basis.ncols() == 0 { f64::INFINITY } else { sigma_min(&(&p.m0 * &basis)) };
    Ok(ConsistentSpace { dim: basis.ncols(), basis, wong_distance, m0_sigma_min })
}

#[derive(Debug, Clone, Serialize)]
pub struct DrazinResult {
    #[serde(skip)]
    pub x: CMat,
    pub index: usize,
    /// Relative residuals of `EX = XE`, `XEX = X`, `X E^{k+1} = E^k`.
    pub residuals: [f64; 3],
    /// Distance to `E^k (E^{2k+1})^+ E^k`, relative to `|X|`.
    pub cross_check: f64,
}

/// `n - dim ran E^n`, iterating `V <- orth(E V)` so that no power is formed.
fn generalized_kernel_dim(e: &CMat) -> usize {
    let n = e.nrows();
    let id = CMat::identity(n, n);
    wong_bases(&MatrixPair { m0: e.clone(), m1: id }).0.last().map_or(n, |b| n - b.ncols())
}

fn mat_pow(e: &CMat, k: usize) -> CMat {
    let n = e.nrows();
    (0..k).fold(CMat::identity(n, n), |acc, _| acc * e)
}

/// Index of a single matrix: nilpotency degree of its nilpotent part, zero
/// when invertible.
pub fn matrix_index(e: &CMat) -> Result<usize> {
    let cn = core_nilpotent(e, generalized_kernel_dim(e))?;
    Ok(if cn.t22.nrows() == 0 { 0 } else { nilpotency_degree(&cn.t22) })
}

pub fn drazin(e: &CMat) -> Result<DrazinResult> {
    let n = e.nrows();
    if !e.is_square() {
        return Err(EvoError::ShapeMismatch("Drazin inverse needs a square matrix".into()));
    }
    let cn = core_nilpotent(e, generalized_kernel_dim(e))?;
    let k = cn.t11.nrows();
    let mut d = CMat::zeros(n, n);
    if k > 0 {
        let inv = inverse(&cn.t11).ok_or(EvoError::ToleranceConflict { gap: cn.gap })?;
        d.view_mut((0, 0), (k, k)).copy_from(&inv);
    }
    let x = &cn.w * d * &cn.w_inv;
    let index = if cn.t22.nrows() == 0 { 0 } else { nilpotency_degree(&cn.t22) };
    let ek = mat_pow(e, index);
    let en = spectral_norm(e).max(f64::MIN_POSITIVE);
    let xn = spectral_norm(&x).max(f64::MIN_POSITIVE);
    let r1 = spectral_norm(&(e * &x - &x * e)) / (en * xn);
    let r2 = spectral_norm(&(&x * e * &x - &x)) / (xn * xn * en).max(xn);
    // against |E|^k, since E^k itself is pure roundoff for nilpotent E
    let ekn = en.powi(index as i32);
    let r3 = spectral_norm(&(&x * &ek * e - &ek)) / (xn * ekn * en).max(ekn);
    let cm = &ek * pinv(&mat_pow(e, 2 * index + 1), 1e-12) * &ek;
    let cross_check = spectral_norm(&(&cm - &x)) / xn;
    Ok(DrazinResult { x, index, residuals: [r1, r2, r3], cross_check })
}

/// `(E, A) = (lam M0 + M1)^{-1} (M0, M1)`, a commuting pair with the same
/// trajectories.
pub fn commuting_reduction(p: &MatrixPair) -> Result<(MatrixPair, f64)> {
    let lam = not_regular_lambda(p)?;
    let base = inverse(&p.pencil(lam)).ok_or(EvoError::NotRegular)?;
    let e = &base * &p.m0;
    let a = &base * &p.m1;
    let defect = spectral_norm(&(&e * &a - &a * &e)) / (spectral_norm(&e) * spectral_norm(&a)).max(f64::MIN_POSITIVE);
    if defect > 1e-10 {
        return Err(EvoError::NumericalAmbiguity { weierstrass: 0, resolvent: 0 });
    }
    Ok((MatrixPair::new(e, a)?, defect))
}

#[derive(Debug, Clone, Serialize)]
pub struct DaeTrajectory {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<Vec<C64>>,
    /// Distance of `U0` from the consistent space before projection.
    pub inconsistency: f64,
    /// Gap to the Drazin-formula trajectory, for commuting pairs.
    pub drazin_gap: Option<f64>,
}

impl DaeTrajectory {
    /// Samples on `[0, T)` as a signal, with the jump at zero halved.
    pub fn to_signal(&self, nu: f64) -> Result<WeightedSignal> {
        let n = self.times.len() - 1;
        let dt = self.times[1] - self.times[0];
        let dim = self.states[0].len();
        let grid = make_grid(0.0, dt, n)?;
        let mut vals = Vec::with_capacity(n * dim);
        for (j, s) in self.states.iter().take(n).enumerate() {
            let f = if j == 0 { 0.5 } else { 1.0 };
            vals.extend(s.iter().map(|v| v * f));
        }
        WeightedSignal::new(grid, nu, dim, vals)
    }
}

/// Tolerances on the inconsistency of `U0`: silent projection below the
/// first, projection with a warning below the second, error above.
pub const CONSISTENCY_TOL: (f64, f64) = (1e-10, 1e-6);

/// Trajectory on `steps + 1` uniform times in `[0, horizon]`.
pub fn dae_solve(p: &MatrixPair, u0: &[C64], horizon: f64, steps: usize) -> Result<DaeTrajectory> {
    let n = p.n();
    if u0.len() != n {
        return Err(EvoError::ShapeMismatch(format!("initial state has {} entries, pair {n}", u0.len())));
    }
    if !(horizon > 0.0) || steps == 0 {
        return Err(EvoError::InvalidArgument("horizon and steps must be positive".into()));
    }
    let w = weierstrass_form(p, DEFAULT_TOL)?;
    let x0 = crate::linalg::CVec::from_column_slice(u0);
    let q_inv = inverse(&w.q).ok_or(EvoError::NotRegular)?;
    let v = &q_inv * &x0;
    let k = w.k;
    let v1 = v.rows(0, k).into_owned();
    let mut proj = crate::linalg::CVec::zeros(n);
    proj.rows_mut(0, k).copy_from(&v1);
    let projected = &w.q * proj;
    let scale = x0.norm().max(f64::MIN_POSITIVE);
    let inconsistency = (&projected - &x0).norm() / scale;
    if inconsistency > CONSISTENCY_TOL.1 {
        return Err(EvoError::InconsistentInitialValue { residual: inconsistency });
    }
    if inconsistency > CONSISTENCY_TOL.0 {
        log::warn!("initial value off the consistent space by {inconsistency:.3e}; projected");
    }
    let q1 = w.q.columns(0, k).into_owned();
    let dt = horizon / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();
    let states: Vec<Vec<C64>> = times
        .iter()
        .map(|&t| {
            let y = &q1 * ((&w.c * c(-t)).exp() * &v1);
            y.iter().copied().collect()
        })
        .collect();
    let drazin_gap = if p.commutes(1e-12) {
        let alt = drazin_trajectory(p, u0, &times)?;
        let gap = states
            .iter()
            .zip(&alt)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max);
        Some(gap / scale)
    } else {
        None
    };
    Ok(DaeTrajectory { times, states, inconsistency, drazin_gap })
}

/// `U(t) = exp(-t M0^D M1) M0^D M0 U0`, valid for commuting pairs.
pub fn drazin_trajectory(p: &MatrixPair, u0: &[C64], times: &[f64]) -> Result<Vec<Vec<C64>>> {
    if !p.commutes(1e-10) {
        return Err(EvoError::InvalidArgument("Drazin formula needs M0 M1 = M1 M0".into()));
    }
    let d = drazin(&p.m0)?.x;
    let gen = &d * &p.m1;
    let x0 = &d * &p.m0 * crate::linalg::CVec::from_column_slice(u0);
    Ok(times.iter().map(|&t| ((&gen * c(-t)).exp() * &x0).iter().copied().collect()).collect())
}

/// Largest gap between the transformed trajectory and
/// `((i w + rho) M0 + M1)^{-1} M0 U0 / sqrt(2 pi)` over `|w| <= max_freq`.
pub fn laplace_solution_check(p: &MatrixPair, u0: &[C64], traj: &DaeTrajectory, rho: f64, max_freq: f64) -> Result<f64> {
    let sig = traj.to_signal(rho)?;
    let spec = forward(&sig);
    let x0 = crate::linalg::CVec::from_column_slice(u0);
    let rhs = &p.m0 * x0;
    let s = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut worst: f64 = 0.0;
    for k in 0..spec.freqs.len() {
        if spec.freqs[k].abs() > max_freq {
            continue;
        }
        let z = spec.z(k);
        let expect = p
            .pencil(z)
            .lu()
            .solve(&rhs)
            .ok_or_else(|| EvoError::NotInvertible { z, detail: "pencil".into() })?
            * c(s);
        let got = spec.coeff(k);
        for (a, b) in got.iter().zip(expect.iter()) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn golden() -> MatrixPair {
        MatrixPair::from_real(2, &[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn rlc() -> MatrixPair {
        // (i, v_C, v_L, v_R), R = 2, C = L = 1
        #[rustfmt::skip]
        let m1 = [
            0.0, 0.0, -1.0, 0.0,
            -1.0, 0.0, 0.0, 0.0,
            -2.0, 0.0, 0.0, 1.0,
            0.0, 1.0, 1.0, 1.0,
        ];
        let mut m0 = [0.0; 16];
        m0[0] = 1.0;
        m0[5] = 1.0;
        MatrixPair::from_real(4, &m0, &m1).unwrap()
    }

    fn cv(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| c(x)).collect()
    }

    #[test]
    fn golden_pair() {
        let p = golden();
        match pair_spectrum(&p).unwrap() {
            PairSpectrum::Finite(v) => assert!(v.len() == 1 && (v[0][0] + 1.0).abs() < 1e-12 && v[0][1].abs() < 1e-12),
            _ => panic!("regular pair"),
        }
        let w = weierstrass_form(&p, DEFAULT_TOL).unwrap();
        assert_eq!(w.k, 1);
        assert!((w.c[(0, 0)] - c(1.0)).norm() < 1e-12);
        assert!(w.residual_m0 < 1e-9 && w.residual_m1 < 1e-9);
        assert_eq!(pair_index(&p).unwrap().index, 1);
        let wong = wong_sequence(&p);
        assert_eq!(wong.stabilization, 1);
        assert!(subspace_distance(&wong.bases[1], &CMat::from_column_slice(2, 1, &cv(&[1.0, 0.0]))) < 1e-12);
        let cs = consistent_subspace(&p).unwrap();
        assert_eq!(cs.dim, 1);
        let tr = dae_solve(&p, &cv(&[2.0, 0.0]), 3.0, 300).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert!((s[0] - c(2.0 * (-t).exp())).norm() < 1e-8 && s[1].norm() < 1e-8);
        }
        assert!(matches!(dae_solve(&p, &cv(&[0.0, 1.0]), 1.0, 10), Err(EvoError::InconsistentInitialValue { .. })));
    }

    #[test]
    fn spectrum_cases() {
        let a = CMat::from_row_slice(2, 2, &cv(&[0.0, 1.0, -2.0, -3.0]));
        let p = MatrixPair::new(CMat::identity(2, 2), -a).unwrap();
        match pair_spectrum(&p).unwrap() {
            PairSpectrum::Finite(v) => {
                assert!((v[0][0] + 2.0).abs() < 1e-12 && (v[1][0] + 1.0).abs() < 1e-12);
            }
            _ => panic!(),
        }
        let sing = MatrixPair::from_real(2, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(pair_spectrum(&sing).unwrap(), PairSpectrum::WholePlane);
        assert!(matches!(weierstrass_form(&sing, DEFAULT_TOL), Err(EvoError::NotRegular)));
    }

    #[test]
    fn index_cases() {
        let ode = MatrixPair::new(CMat::identity(3, 3), CMat::from_fn(3, 3, |i, j| c((i + 2 * j) as f64))).unwrap();
        assert_eq!(pair_index(&ode).unwrap().index, 1);
        let w = weierstrass_form(&ode, DEFAULT_TOL).unwrap();
        assert_eq!(w.k, 3);
        let j3 = MatrixPair::from_real(3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let r = pair_index(&j3).unwrap();
        assert_eq!((r.index, r.resolvent_index), (3, 3));
        assert_eq!(consistent_subspace(&j3).unwrap().dim, 0);
        let alg = MatrixPair::new(CMat::zeros(2, 2), CMat::identity(2, 2)).unwrap();
        assert_eq!(consistent_subspace(&alg).unwrap().dim, 0);
        let full = MatrixPair::new(CMat::identity(2, 2), CMat::zeros(2, 2)).unwrap();
        assert_eq!(wong_sequence(&full).dims, vec![2, 2]);
    }

    #[test]
    fn drazin_cases() {
        let e = CMat::from_row_slice(2, 2, &cv(&[2.0, 0.0, 0.0, 0.0]));
        let d = drazin(&e).unwrap();
        assert!((d.x[(0, 0)] - c(0.5)).norm() < 1e-14 && d.x[(1, 1)].norm() < 1e-14);
        let inv = CMat::from_row_slice(2, 2, &cv(&[1.0, 2.0, 3.0, 4.0]));
        assert!((drazin(&inv).unwrap().x - inverse(&inv).unwrap()).norm() < 1e-12);
        let nil = CMat::from_row_slice(3, 3, &cv(&[0.0, 1.0, 5.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]));
        let dn = drazin(&nil).unwrap();
        assert!(dn.x.norm() < 1e-12);
        assert_eq!(dn.index, 3);
    }

    #[test]
    fn rlc_circuit() {
        let p = rlc();
        assert_eq!(pair_index(&p).unwrap().index, 1);
        let (i0, v0) = (1.0, 0.5);
        let u0 = cv(&[i0, v0, -2.0 * i0 - v0, 2.0 * i0]);
        let tr = dae_solve(&p, &u0, 5.0, 100).unwrap();
        let b = i0 + v0;
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let e = (-t).exp();
            assert!((s[1].re - (v0 + b * t) * e).abs() < 1e-10);
            assert!((s[0].re - (i0 - b * t) * e).abs() < 1e-10);
        }
        let (red, defect) = commuting_reduction(&p).unwrap();
        assert!(defect < 1e-10);
        let a = consistent_subspace(&p).unwrap().basis;
        let b2 = consistent_subspace(&red).unwrap().basis;
        assert!(subspace_distance(&a, &b2) < 1e-8);
        let tr2 = dae_solve(&red, &u0, 5.0, 100).unwrap();
        assert!(tr2.drazin_gap.unwrap() < 1e-9);
        for (x, y) in tr.states.iter().zip(&tr2.states) {
            assert!(x.iter().zip(y).all(|(a, b)| (a - b).norm() < 1e-9));
        }
    }

    #[test]
    fn laplace_check_golden() {
        let p = golden();
        let u0 = cv(&[1.0, 0.0]);
        let tr = dae_solve(&p, &u0, 40.0, 40 * 1024).unwrap();
        let dev = laplace_solution_check(&p, &u0, &tr, 1.0, 10.0).unwrap();
        assert!(dev < 1e-6, "{dev}");
        let z = dae_solve(&p, &cv(&[0.0, 0.0]), 1.0, 64).unwrap();
        assert_eq!(laplace_solution_check(&p, &cv(&[0.0, 0.0]), &z, 1.0, 10.0).unwrap(), 0.0);
    }

    pub(super) fn random_pair(seed: u64, n: usize, nil: usize) -> MatrixPair {
        // P diag(I, N) Q^-1, P diag(C, I) Q^-1 with N strictly upper triangular
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |rows: usize, cols: usize| CMat::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0)));
        // diagonally dominant, so the transformations stay well conditioned
        let pm = r(n, n) + CMat::identity(n, n) * c(n as f64);
        let qm = r(n, n) + CMat::identity(n, n) * c(n as f64);
        let k = n - nil;
        let cm = r(k, k);
        let mut nm = r(nil, nil);
        for i in 0..nil {
            for j in 0..=i {
                nm[(i, j)] = c(0.0);
            }
        }
        let mut e0 = CMat::zeros(n, n);
        e0.view_mut((0, 0), (k, k)).fill_with_identity();
        e0.view_mut((k, k), (nil, nil)).copy_from(&nm);
        let mut e1 = CMat::identity(n, n);
        e1.view_mut((0, 0), (k, k)).copy_from(&cm);
        let qi = inverse(&qm).unwrap();
        MatrixPair::new(&pm * e0 * &qi, &pm * e1 * &qi).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_pairs_normal_form(seed in 0u64..10_000, n in 2usize..7, nil_frac in 0.0f64..1.0) {
            let nil = ((n as f64) * nil_frac) as usize;
            let p = random_pair(seed, n, nil);
            let w = weierstrass_form(&p, DEFAULT_TOL).unwrap();
            prop_assert_eq!(w.k, n - nil);
            prop_assert_eq!(det_degree(&p), w.k);
            let s0 = spectral_norm(&p.m0) + spectral_norm(&p.m1);
            prop_assert!(w.residual_m0 < 1e-9 * s0.max(1.0) * 100.0, "{}", w.residual_m0);
            prop_assert!(w.residual_m1 < 1e-9 * s0.max(1.0) * 100.0, "{}", w.residual_m1);
            let wong = wong_sequence(&p);
            let idx = w.nilpotency();
            prop_assert!(wong.stabilization <= idx);
            prop_assert!(wong.range_check.unwrap() < 1e-6, "{:?} {:?}", wong.dims, wong.range_check);
            for win in wong.bases.windows(2) {
                prop_assert!(win[1].ncols() <= win[0].ncols());
            }
            let cs = consistent_subspace(&p).unwrap();
            if cs.dim > 0 {
                prop_assert!(cs.m0_sigma_min > 0.0);
            }
        }
    }
}
