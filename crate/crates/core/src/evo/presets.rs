//! Catalog of 1D model problems: material law, block operator, layout and a
//! recommended rate with its certificate.

use serde::{Deserialize, Serialize};

use super::{recommend_nu, SolverConfig};
use crate::error::{invalid, EvoError, Result};
use crate::linalg::c;
use crate::material::{Coeff, MaterialLaw, PositivityCertificate};
use crate::spatial::{build_div0_grad, build_grad0_div, robin_block, skew_block, Layout, SpaceGrid, SpatialOperator};
use crate::time_ops::Kernel;
use crate::C64;

pub const PRESET_NAMES: [&str; 9] =
    ["heat", "wave", "maxwell1d", "mixed", "dpl", "delay-heat", "frac-elastic", "robin-heat", "memory-heat"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetParams {
    pub cells: usize,
    pub length: f64,
    /// `dirichlet` or `neumann` (heat only).
    pub boundary: String,
    /// Heat conductivity, constant or one value per cell.
    pub a: Vec<f64>,
    pub rho: f64,
    pub stiffness: f64,
    pub eps: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Mixed-type switch per cell; defaults to 1 on the left half, 0 on the right.
    pub s: Option<Vec<f64>>,
    pub s_q: f64,
    pub s_theta: f64,
    pub delay: f64,
    pub delay_coeff: f64,
    pub alpha: f64,
    pub frac_c: f64,
    pub frac_d: f64,
    pub memory_weight: f64,
    pub memory_rate: f64,
    pub robin_beta: [f64; 2],
    pub general_robin: bool,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            cells: 64,
            length: 1.0,
            boundary: "dirichlet".into(),
            a: vec![1.0],
            rho: 1.0,
            stiffness: 1.0,
            eps: 1.0,
            mu: 1.0,
            sigma: 0.0,
            s: None,
            s_q: 0.3,
            s_theta: 0.8,
            delay: 0.5,
            delay_coeff: 0.5,
            alpha: 0.75,
            frac_c: 1.0,
            frac_d: 1.0,
            memory_weight: 0.5,
            memory_rate: 1.0,
            robin_beta: [0.0, 1.0],
            general_robin: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockInfo {
    pub name: &'static str,
    pub dim: usize,
    /// `true` for cell values, `false` for interior-face values.
    pub on_cells: bool,
}

impl BlockInfo {
    pub fn layout(&self) -> Layout {
        if self.on_cells {
            Layout::Cells
        } else {
            Layout::InteriorFaces
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub law: MaterialLaw,
    pub op: SpatialOperator,
    pub space: SpaceGrid,
    pub blocks: Vec<BlockInfo>,
    pub nu: f64,
    pub certificate: PositivityCertificate,
    /// Diagonals of `M0`, `M1` when `M(z) = M0 + z^{-1} M1`.
    pub pair: Option<(Vec<C64>, Vec<C64>)>,
    /// Whether the flux block carries a Neumann slot at the right end.
    pub neumann: bool,
}

impl Preset {
    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }
}

fn per_cell(v: &[f64], m: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; m]),
        n if n == m => Ok(v.to_vec()),
        n => invalid(format!("{what} has {n} values for {m} cells")),
    }
}

fn diag(v: &[f64]) -> Coeff {
    Coeff::Diag(v.iter().map(|&x| c(x)).collect())
}

fn scalar_block(dim: usize, x: f64) -> MaterialLaw {
    MaterialLaw::constant(dim, Coeff::Scalar(c(x))).expect("scalar coefficient")
}

/// Dirichlet layout: scalar on interior faces, flux on cells.
fn dirichlet(space: &SpaceGrid) -> Result<(SpatialOperator, Vec<BlockInfo>)> {
    let (g0, _) = build_grad0_div(space);
    let m = space.m;
    Ok((
        skew_block(&g0)?,
        vec![BlockInfo { name: "scalar", dim: m - 1, on_cells: false }, BlockInfo { name: "flux", dim: m, on_cells: true }],
    ))
}

/// Neumann layout: scalar on cells, flux on interior faces.
fn neumann(space: &SpaceGrid) -> Result<(SpatialOperator, Vec<BlockInfo>)> {
    let (_, grad) = build_div0_grad(space);
    let m = space.m;
    Ok((
        skew_block(&grad)?,
        vec![BlockInfo { name: "scalar", dim: m, on_cells: true }, BlockInfo { name: "flux", dim: m - 1, on_cells: false }],
    ))
}

pub fn preset(name: &str, p: &PresetParams) -> Result<Preset> {
    let space = SpaceGrid::new(0.0, p.length, p.cells)?;
    let m = p.cells;
    let cfg = SolverConfig::default();
    let mut pair = None;
    let mut is_neumann = false;
    let (law, op, blocks) = match name {
        "heat" | "robin-heat" => {
            let (op, blocks) = match (name, p.boundary.as_str()) {
                ("robin-heat", _) => {
                    let (_, b) = neumann(&space)?;
                    (robin_block(&space, C64::new(p.robin_beta[0], p.robin_beta[1]), p.general_robin)?, b)
                }
                (_, "dirichlet") => dirichlet(&space)?,
                (_, "neumann") => {
                    is_neumann = true;
                    neumann(&space)?
                }
                (_, other) => return invalid(format!("unknown boundary '{other}'")),
            };
            let flux_dim = blocks[1].dim;
            let a = if blocks[1].on_cells {
                per_cell(&p.a, m, "a")?
            } else if p.a.len() == 1 {
                vec![p.a[0]; flux_dim]
            } else {
                return invalid("per-cell conductivity needs the Dirichlet layout");
            };
            if a.iter().any(|&x| !(x > 0.0)) {
                return invalid("conductivity must satisfy Re a >= c > 0");
            }
            let inv_a: Vec<f64> = a.iter().map(|x| 1.0 / x).collect();
            let law = MaterialLaw::block_diag(vec![
                MaterialLaw::identity(blocks[0].dim),
                MaterialLaw::zinv_pow(flux_dim, 1, diag(&inv_a))?,
            ])?;
            let n0 = blocks[0].dim;
            pair = Some((
                [vec![c(1.0); n0], vec![c(0.0); flux_dim]].concat(),
                [vec![c(0.0); n0], inv_a.iter().map(|&x| c(x)).collect()].concat(),
            ));
            (law, op, blocks)
        }
        "wave" => {
            if !(p.rho > 0.0 && p.stiffness > 0.0) {
                return invalid("wave needs rho > 0 and stiffness > 0");
            }
            let (op, blocks) = dirichlet(&space)?;
            let law = MaterialLaw::block_diag(vec![scalar_block(m - 1, p.rho), scalar_block(m, 1.0 / p.stiffness)])?;
            pair = Some(([vec![c(p.rho); m - 1], vec![c(1.0 / p.stiffness); m]].concat(), vec![c(0.0); 2 * m - 1]));
            (law, op, blocks)
        }
        "maxwell1d" => {
            if !(p.mu > 0.0) || p.eps < 0.0 || p.sigma < 0.0 {
                return invalid("maxwell1d needs mu > 0, eps >= 0, sigma >= 0");
            }
            if p.eps == 0.0 && !(p.sigma > 0.0) {
                return invalid("eddy-current case needs nu eps + Re sigma >= c > 0, i.e. sigma > 0");
            }
            let (op, mut blocks) = dirichlet(&space)?;
            blocks[0].name = "E";
            blocks[1].name = "H";
            let e = MaterialLaw::sum(vec![
                scalar_block(m - 1, p.eps),
                MaterialLaw::zinv_pow(m - 1, 1, Coeff::Scalar(c(p.sigma)))?,
            ])?;
            let law = MaterialLaw::block_diag(vec![e, scalar_block(m, p.mu)])?;
            pair = Some((
                [vec![c(p.eps); m - 1], vec![c(p.mu); m]].concat(),
                [vec![c(p.sigma); m - 1], vec![c(0.0); m]].concat(),
            ));
            (law, op, blocks)
        }
        "mixed" => {
            let s = match &p.s {
                Some(v) => per_cell(v, m, "s")?,
                None => space.centers().iter().map(|&x| if x < 0.5 * p.length { 1.0 } else { 0.0 }).collect(),
            };
            if s.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return invalid("mixed switch s must take values in [0, 1]");
            }
            let (op, blocks) = dirichlet(&space)?;
            let one_minus: Vec<f64> = s.iter().map(|x| 1.0 - x).collect();
            let flux = MaterialLaw::sum(vec![
                MaterialLaw::constant(m, diag(&s))?,
                MaterialLaw::zinv_pow(m, 1, diag(&one_minus))?,
            ])?;
            let law = MaterialLaw::block_diag(vec![MaterialLaw::identity(m - 1), flux])?;
            pair = Some((
                [vec![c(1.0); m - 1], s.iter().map(|&x| c(x)).collect()].concat(),
                [vec![c(0.0); m - 1], one_minus.iter().map(|&x| c(x)).collect()].concat(),
            ));
            (law, op, blocks)
        }
        "dpl" => {
            if p.s_q == 0.0 || !(p.s_theta > 0.0) {
                return invalid("dual phase lag needs s_q != 0 and s_theta > 0");
            }
            let (op, blocks) = dirichlet(&space)?;
            let id = Coeff::identity();
            // (z^-2 + s_q z^-1 + s_q^2/2) (z^-1 + s_theta)^-1
            let num = MaterialLaw::sum(vec![
                MaterialLaw::zinv_pow(m, 2, id.clone())?,
                MaterialLaw::zinv_pow(m, 1, Coeff::Scalar(c(p.s_q)))?,
                scalar_block(m, 0.5 * p.s_q * p.s_q),
            ])?;
            let den = MaterialLaw::inverse(MaterialLaw::sum(vec![
                MaterialLaw::zinv_pow(m, 1, id)?,
                scalar_block(m, p.s_theta),
            ])?)?;
            let law = MaterialLaw::block_diag(vec![MaterialLaw::identity(m - 1), MaterialLaw::product(vec![num, den])?])?;
            (law, op, blocks)
        }
        "delay-heat" => {
            if !(p.delay > 0.0) || !(p.a[0] > 0.0) {
                return invalid("delay-heat needs a positive delay and a > 0");
            }
            let (op, blocks) = dirichlet(&space)?;
            // flux law z^-1 (a + b tau_{-h})^-1
            let inner = MaterialLaw::inverse(MaterialLaw::sum(vec![
                scalar_block(m, p.a[0]),
                MaterialLaw::delay(m, -p.delay, Coeff::Scalar(c(p.delay_coeff)))?,
            ])?)?;
            let flux = MaterialLaw::product(vec![MaterialLaw::zinv_pow(m, 1, Coeff::identity())?, inner])?;
            (MaterialLaw::block_diag(vec![MaterialLaw::identity(m - 1), flux])?, op, blocks)
        }
        "frac-elastic" => {
            if !(0.5..=1.0).contains(&p.alpha) {
                return invalid("fractional elasticity needs alpha in [1/2, 1]");
            }
            if !(p.rho > 0.0 && p.frac_c > 0.0 && p.frac_d > 0.0) {
                return invalid("fractional elasticity needs rho, C, D > 0");
            }
            let (op, mut blocks) = dirichlet(&space)?;
            blocks[0].name = "velocity";
            blocks[1].name = "stress";
            // (C + D z^alpha)^-1 = z^-alpha (C z^-alpha + D)^-1
            let za = MaterialLaw::frac_pow(m, p.alpha, Coeff::identity())?;
            let inner = MaterialLaw::inverse(MaterialLaw::sum(vec![
                MaterialLaw::scale(c(p.frac_c), za.clone()),
                scalar_block(m, p.frac_d),
            ])?)?;
            let stress = MaterialLaw::product(vec![za, inner])?;
            (MaterialLaw::block_diag(vec![scalar_block(m - 1, p.rho), stress])?, op, blocks)
        }
        "memory-heat" => {
            if !(p.memory_rate > 0.0) || p.memory_weight < 0.0 {
                return invalid("memory kernel needs a positive rate and nonnegative weight");
            }
            let (op, blocks) = dirichlet(&space)?;
            let lam = p.memory_rate;
            let w = p.memory_weight;
            let kdt = 1.0 / 512.0;
            let len = (40.0 / lam / kdt).ceil() as usize;
            let kernel = Kernel::from_fn(kdt, len, |t| w * lam * (-lam * t).exp())?;
            let inner = MaterialLaw::inverse(MaterialLaw::sum(vec![
                MaterialLaw::identity(m),
                MaterialLaw::scale(c(-1.0), MaterialLaw::kernel_lt(m, kernel, Coeff::identity())?),
            ])?)?;
            let flux = MaterialLaw::product(vec![MaterialLaw::zinv_pow(m, 1, Coeff::identity())?, inner])?;
            (MaterialLaw::block_diag(vec![MaterialLaw::identity(m - 1), flux])?, op, blocks)
        }
        other => return Err(EvoError::UnknownProblem(other.to_string())),
    };
    let (nu, certificate) = recommend_nu(&law, None, &cfg)?;
    Ok(Preset { name: name.to_string(), law, op, space, blocks, nu, certificate, pair, neumann: is_neumann })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::LawValue;

    fn small() -> PresetParams {
        PresetParams { cells: 16, ..Default::default() }
    }

    #[test]
    fn every_preset_builds_and_certifies() {
        for name in PRESET_NAMES {
            let p = preset(name, &small()).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(p.law.dim, p.op.rows(), "{name}");
            assert_eq!(p.dims().iter().sum::<usize>(), p.law.dim);
            assert!(p.certificate.c > 0.0, "{name}");
            assert!(p.nu > p.law.abscissa(), "{name}");
        }
        assert!(matches!(preset("nope", &small()), Err(EvoError::UnknownProblem(_))));
    }

    #[test]
    fn mixed_endpoints() {
        let z = C64::new(2.0, 1.0);
        let wave = preset("mixed", &PresetParams { s: Some(vec![1.0]), ..small() }).unwrap();
        let heat = preset("mixed", &PresetParams { s: Some(vec![0.0]), ..small() }).unwrap();
        let pure_heat = preset("heat", &small()).unwrap();
        let pure_wave = preset("wave", &small()).unwrap();
        assert_eq!(wave.law.evaluate(z).unwrap().to_dense(), pure_wave.law.evaluate(z).unwrap().to_dense());
        let (a, b) = (heat.law.evaluate(z).unwrap(), pure_heat.law.evaluate(z).unwrap());
        assert!((a.to_dense() - b.to_dense()).norm() < 1e-15);
        assert!(preset("mixed", &PresetParams { s: Some(vec![1.5]), ..small() }).is_err());
    }

    #[test]
    fn parameter_checks() {
        let eddy = PresetParams { eps: 0.0, sigma: 2.0, ..small() };
        assert!(preset("maxwell1d", &eddy).unwrap().certificate.c > 0.0);
        assert!(preset("maxwell1d", &PresetParams { eps: 0.0, sigma: 0.0, ..small() }).is_err());
        assert!(preset("dpl", &PresetParams { s_q: 0.0, ..small() }).is_err());
        assert!(preset("frac-elastic", &PresetParams { alpha: 0.3, ..small() }).is_err());
        assert!(preset("heat", &PresetParams { a: vec![-1.0], ..small() }).is_err());
        assert!(preset("robin-heat", &PresetParams { robin_beta: [-1.0, 0.0], ..small() }).is_err());
        let general = PresetParams { robin_beta: [-1.0, 0.0], general_robin: true, ..small() };
        assert!(preset("robin-heat", &general).is_ok());
        let dpl = preset("dpl", &PresetParams { s_q: 0.3, s_theta: 0.8, ..small() }).unwrap();
        match dpl.law.evaluate(C64::new(1.0, 2.0)).unwrap() {
            LawValue::Diag(_) => {}
            _ => panic!("dpl law should stay diagonal"),
        }
    }

    #[test]
    fn delay_heat_onset() {
        let p = preset("delay-heat", &PresetParams { delay_coeff: 2.0, delay: 0.5, ..small() }).unwrap();
        let onset = 2f64.ln() / 0.5;
        assert!(p.law.abscissa() >= onset - 1e-12);
        assert!(p.nu > onset);
    }
}
