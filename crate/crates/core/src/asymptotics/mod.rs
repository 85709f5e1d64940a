//! Exponential stability (decay-rate bound, fitted decay) and periodic
//! homogenization (cell problems, weak limits, memory series, sweeps).

pub mod homogenization;
pub mod sweep;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, EvoError, Result};
use crate::linalg::dense::{hermitian_eigen, sigma_min, spectral_norm};
use crate::linalg::{c, CMat};
use crate::material::{LawValue, SamplingSpec};
use crate::signal::WeightedSignal;
use crate::spatial::{build_grad0_div, SpaceGrid};
use crate::C64;

pub use homogenization::{
    cell_problem, corrector_dense, homogenized_matrix, weak_limit_mean, CellCoeff, CellProblem, Corrector, Homogenized,
    WeakLimitReport,
};
pub use sweep::{
    bessel_j, oscillation_sweep, sin_memory_reference, sin_moments, wot_limit_series, SweepParams, SweepRow, SweepTable,
    WotSeries,
};

pub type Symbol = Arc<dyn Fn(C64) -> LawValue + Send + Sync>;

/// Parabolic-type setup `d M0 + M1(d) + [[0, -C^*], [C, 0]]` with `M0` on
/// the first block and `M1` on the second.
#[derive(Clone)]
pub struct StabilitySetup {
    pub m0: CMat,
    pub m1: Symbol,
    pub m1_dim: usize,
    /// Strip `Re z > -rho1` on which `M1` is sampled; `None` for a constant `M1`.
    pub rho1: Option<f64>,
    /// Delay shifts inside `M1`, for periodic sampling.
    pub delays: Vec<f64>,
    /// `C` from the first block to the second.
    pub cop: CMat,
}

impl std::fmt::Debug for StabilitySetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StabilitySetup").field("m1_dim", &self.m1_dim).field("rho1", &self.rho1).finish()
    }
}

fn grad0_dense(grid: &SpaceGrid) -> CMat {
    build_grad0_div(grid).0.matrix.to_dense()
}

impl StabilitySetup {
    /// Heat equation with conductivity `a` and Dirichlet ends.
    pub fn heat(grid: &SpaceGrid, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return invalid("conductivity must be positive");
        }
        let m = grid.m;
        Ok(StabilitySetup {
            m0: CMat::identity(m - 1, m - 1),
            m1: Arc::new(move |_| LawValue::Diag(vec![c(1.0 / a); m])),
            m1_dim: m,
            rho1: None,
            delays: vec![],
            cop: grad0_dense(grid),
        })
    }

    /// Dual phase lag in the form `M1(z) = (1 + s_q z) / (1 + s_theta z)`.
    pub fn dpl(grid: &SpaceGrid, s_q: f64, s_theta: f64, rho1: f64) -> Result<Self> {
        if !(s_q > 0.0 && s_theta > s_q) {
            return invalid("need 0 < s_q < s_theta");
        }
        if !(rho1 > 0.0 && rho1 < 1.0 / s_theta) {
            return invalid(format!("rho1 must lie in (0, 1/s_theta) = (0, {})", 1.0 / s_theta));
        }
        let m = grid.m;
        Ok(StabilitySetup {
            m0: CMat::identity(m - 1, m - 1),
            m1: Arc::new(move |z| LawValue::Diag(vec![(1.0 + s_q * z) / (1.0 + s_theta * z); m])),
            m1_dim: m,
            rho1: Some(rho1),
            delays: vec![],
            cop: grad0_dense(grid),
        })
    }

    /// Heat with delayed conductivity, `M1(z) = (a + b e^{-z h})^{-1}`, on
    /// the strip `rho1 = 0.9 log(a / |b|) / h`.
    pub fn delay_heat(grid: &SpaceGrid, a: f64, b: f64, h: f64) -> Result<Self> {
        if !(a > b.abs() && h > 0.0) {
            return invalid("delay heat needs a > |b| and h > 0");
        }
        let rho1 = delay_cap(a, b, h) * 0.9;
        let m = grid.m;
        Ok(StabilitySetup {
            m0: CMat::identity(m - 1, m - 1),
            m1: Arc::new(move |z| LawValue::Diag(vec![1.0 / (a + b * (-z * h).exp()); m])),
            m1_dim: m,
            rho1: Some(rho1),
            delays: vec![-h],
            cop: grad0_dense(grid),
        })
    }
}

/// Largest strip half-width on which `a + b e^{-z h}` stays invertible by
/// the Neumann series.
pub fn delay_cap(a: f64, b: f64, h: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        (a / b.abs()).ln() / h
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayBound {
    pub rho0: f64,
    pub rho1: Option<f64>,
    pub c0: f64,
    pub c1: f64,
    pub m1_sup: f64,
    pub m0_norm: f64,
    /// `|C^{-1}|` on the range of `C`.
    pub cinv_norm: f64,
}

/// `min(rho1, c1 / (|M1|^2 |M0| |C^{-1}|^2))`.
pub fn rho0_formula(rho1: f64, c1: f64, m1_sup: f64, m0_norm: f64, cinv_norm: f64) -> f64 {
    rho1.min(c1 / (m1_sup * m1_sup * m0_norm * cinv_norm * cinv_norm))
}

fn strip_lines(rho1: Option<f64>) -> Vec<f64> {
    match rho1 {
        None => vec![0.0],
        Some(r) => {
            // just inside the strip, where both extrema of a bounded
            // holomorphic function sit, plus interior lines
            let edge = -r * (1.0 - 1e-9);
            vec![edge, -0.5 * r, 0.0, 1.0, 100.0 * r.max(1.0)]
        }
    }
}

pub fn decay_rate_bound(s: &StabilitySetup) -> Result<DecayBound> {
    let n0 = s.m0.nrows();
    if s.cop.shape() != (s.m1_dim, n0) {
        return Err(EvoError::ShapeMismatch(format!("C is {:?}, expected {:?}", s.cop.shape(), (s.m1_dim, n0))));
    }
    if (&s.m0 - s.m0.adjoint()).norm() > 1e-12 * s.m0.norm().max(1.0) {
        return invalid("M0 must be Hermitian");
    }
    let (vals, _) = hermitian_eigen(&s.m0);
    let c0 = vals.first().copied().unwrap_or(0.0);
    if !(c0 > 0.0) {
        return Err(EvoError::NoCertificate { witness: c(0.0), value: c0 });
    }
    let spec = SamplingSpec::default();
    let ims = spec.imag_samples(&s.delays);
    let mut c1 = f64::INFINITY;
    let mut witness = c(0.0);
    let mut sup: f64 = 0.0;
    for re in strip_lines(s.rho1) {
        for &im in &ims {
            let z = C64::new(re, im);
            let v = (s.m1)(z);
            if v.dim() != s.m1_dim {
                return Err(EvoError::ShapeMismatch(format!("M1 has dimension {}", v.dim())));
            }
            let l = v.lambda_min_re();
            let nv = v.norm();
            if !l.is_finite() || !nv.is_finite() {
                return Err(EvoError::NoCertificate { witness: z, value: f64::NAN });
            }
            if l < c1 {
                c1 = l;
                witness = z;
            }
            sup = sup.max(nv);
        }
    }
    if !(c1 > 0.0) {
        return Err(EvoError::NoCertificate { witness, value: c1 });
    }
    let smin = sigma_min(&s.cop);
    if !(smin > 1e-12 * spectral_norm(&s.cop)) {
        return Err(EvoError::Degenerate("C is not boundedly invertible".into()));
    }
    let m0_norm = vals.last().copied().unwrap_or(0.0);
    let cinv_norm = 1.0 / smin;
    let rho0 = rho0_formula(s.rho1.unwrap_or(f64::INFINITY), c1, sup, m0_norm, cinv_norm);
    Ok(DecayBound { rho0, rho1: s.rho1, c0, c1, m1_sup: sup, m0_norm, cinv_norm })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Fitted `r` in `|U(t)| ~ e^{-r t}`; negative for growth.
    pub rate: f64,
    /// Two standard errors of the slope.
    pub band: f64,
    pub intercept: f64,
    pub samples: usize,
}

/// Least-squares fit of `log |U(t)|` on `[a, b]`.
pub fn measure_decay(u: &WeightedSignal, a: f64, b: f64) -> Result<DecayFit> {
    if !(b > a) {
        return invalid("fit window is empty");
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for j in 0..u.grid.n {
        let t = u.grid.t(j);
        if t < a || t > b {
            continue;
        }
        let n = u.sample_norm(j);
        if !(n > 1e-250) || !n.is_finite() {
            return Err(EvoError::UnderflowWindow);
        }
        ts.push(t);
        ys.push(n.ln());
    }
    let k = ts.len();
    if k < 3 {
        return invalid("fit window holds fewer than three samples");
    }
    let kf = k as f64;
    let tm = ts.iter().sum::<f64>() / kf;
    let ym = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rss: f64 = ts.iter().zip(&ys).map(|(t, y)| (y - intercept - slope * t).powi(2)).sum();
    let se = (rss / (kf - 2.0) / sxx).sqrt();
    Ok(DecayFit { rate: -slope, band: 2.0 * se, intercept, samples: k })
}

/// `|U|_{2,-rho}` restricted to `t <= T`, for each `T` in `ends`.
pub fn reweighted_norms(u: &WeightedSignal, rho: f64, ends: &[f64]) -> Vec<f64> {
    ends.iter()
        .map(|&end| {
            (0..u.grid.n)
                .filter(|&j| u.grid.t(j) <= end)
                .map(|j| u.grid.dt * (2.0 * rho * u.grid.t(j)).exp() * u.sample_norm(j).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::make_grid;
    use crate::time_ops::integrate;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn heat_bound_tends_to_pi_squared() {
        let mut last = 0.0;
        for m in [16, 64, 256] {
            let b = decay_rate_bound(&StabilitySetup::heat(&SpaceGrid::new(0.0, 1.0, m).unwrap(), 1.0).unwrap()).unwrap();
            let h = 1.0 / m as f64;
            let exact = (2.0 / h * (PI * h / 2.0).sin()).powi(2);
            assert!((b.rho0 - exact).abs() < 1e-8 * exact, "{} {exact}", b.rho0);
            assert!(b.rho0 > last);
            last = b.rho0;
        }
        assert!((last - PI * PI).abs() < 1e-3 * PI * PI);
    }

    #[test]
    fn dpl_and_delay_setups() {
        let g = SpaceGrid::new(0.0, 1.0, 16).unwrap();
        let (sq, st) = (0.3, 0.8);
        let b = decay_rate_bound(&StabilitySetup::dpl(&g, sq, st, 0.5 / st).unwrap()).unwrap();
        assert!(b.c1 >= sq / st - 1e-12, "{}", b.c1);
        assert!(b.rho0 <= 0.5 / st);
        assert!(StabilitySetup::dpl(&g, sq, st, 1.0 / st).is_err());
        let d = StabilitySetup::delay_heat(&g, 1.0, 0.5, 0.5).unwrap();
        assert!(d.rho1.unwrap() < 2f64.ln() / 0.5);
        let db = decay_rate_bound(&d).unwrap();
        assert!(db.rho0 > 0.0 && db.rho0 <= d.rho1.unwrap());
        assert!(StabilitySetup::delay_heat(&g, 1.0, 1.5, 0.5).is_err());
    }

    #[test]
    fn no_certificate_for_indefinite_m1() {
        let g = SpaceGrid::new(0.0, 1.0, 8).unwrap();
        let mut s = StabilitySetup::heat(&g, 1.0).unwrap();
        s.m1 = Arc::new(|_| LawValue::Diag(vec![c(-1.0); 8]));
        assert!(matches!(decay_rate_bound(&s), Err(EvoError::NoCertificate { .. })));
    }

    #[test]
    fn fit_exact_exponential() {
        let g = make_grid(0.0, 1.0 / 64.0, 512).unwrap();
        let u = WeightedSignal::from_real_fn(g, 1.0, |t| 3.0 * (-t).exp());
        let f = measure_decay(&u, 0.0, 7.0).unwrap();
        assert!((f.rate - 1.0).abs() < 1e-3);
        assert!(f.band < 1e-10);
        let z = WeightedSignal::zeros(g, 1.0, 1);
        assert!(matches!(measure_decay(&z, 0.0, 1.0), Err(EvoError::UnderflowWindow)));
    }

    #[test]
    fn integrated_pulse_does_not_decay() {
        let g = make_grid(-1.0, 1.0 / 64.0, 1024).unwrap();
        let f = WeightedSignal::from_real_fn(g, 2.0, |t| if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 });
        let u = integrate(&f).unwrap();
        let fit = measure_decay(&u, 2.0, 10.0).unwrap();
        assert!(fit.rate.abs() <= 0.01, "{}", fit.rate);
    }

    proptest! {
        #[test]
        fn rho0_monotone(rho1 in 0.1f64..100.0, c1 in 0.01f64..10.0, sup in 0.1f64..10.0, m0 in 0.1f64..10.0,
                         cinv in 0.01f64..10.0, grow in 1.0f64..5.0) {
            let base = rho0_formula(rho1, c1, sup, m0, cinv);
            prop_assert!(rho0_formula(rho1, c1 * grow, sup, m0, cinv) >= base);
            prop_assert!(rho0_formula(rho1, c1, sup, m0, cinv / grow) >= base);
            prop_assert!(base <= rho1);
        }
    }
}
