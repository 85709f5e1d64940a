//! Staggered finite differences on an interval: gradient/divergence pairs
//! with Dirichlet, Neumann, periodic and Robin couplings.
//!
//! Layout: `m` cells `[x_i, x_{i+1}]` with faces `x_i = a + i h`. The
//! difference matrix `D` (`m x (m-1)`) maps interior-face values to cells by
//! `(v_{i+1} - v_i) / h`, with zero boundary values folded in. Dirichlet:
//! `grad0 = D` on interior-face scalars, `div = -D^T`. Neumann: `div0 = D` on
//! interior-face fluxes, `grad = -D^T` on cell scalars.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{invalid, EvoError, Result};
use crate::linalg::dense::singular_values;
use crate::linalg::{c, CMat, SparseMat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceGrid {
    pub a: f64,
    pub b: f64,
    pub m: usize,
}

impl SpaceGrid {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return invalid(format!("interval ({a}, {b}) is empty"));
        }
        if m < 2 {
            return invalid("need at least two cells");
        }
        Ok(SpaceGrid { a, b, m })
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.m as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.a + (i as f64 + 0.5) * self.h()).collect()
    }

    /// All `m + 1` faces.
    pub fn faces(&self) -> Vec<f64> {
        (0..=self.m).map(|i| self.a + i as f64 * self.h()).collect()
    }

    pub fn interior_faces(&self) -> Vec<f64> {
        (1..self.m).map(|i| self.a + i as f64 * self.h()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Grad0,
    Div,
    Div0,
    Grad,
    GradSharp,
    DivSharp,
    Block,
}

impl OpKind {
    /// The kind holding the negative adjoint, if registered.
    pub fn partner(self) -> Option<OpKind> {
        match self {
            OpKind::Grad0 => Some(OpKind::Div),
            OpKind::Div => Some(OpKind::Grad0),
            OpKind::Div0 => Some(OpKind::Grad),
            OpKind::Grad => Some(OpKind::Div0),
            OpKind::GradSharp => Some(OpKind::DivSharp),
            OpKind::DivSharp => Some(OpKind::GradSharp),
            OpKind::Block => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialOperator {
    pub matrix: SparseMat,
    pub kind: OpKind,
    pub grid: SpaceGrid,
}

impl SpatialOperator {
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(x)
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols
    }

    /// `-C^*`, tagged with the partner kind.
    pub fn negative_adjoint(&self) -> Result<SpatialOperator> {
        let kind = self.kind.partner().ok_or_else(|| EvoError::InvalidArgument("operator has no registered partner".into()))?;
        Ok(SpatialOperator { matrix: self.matrix.adjoint().scale(c(-1.0)), kind, grid: self.grid })
    }
}

fn difference(grid: &SpaceGrid) -> SparseMat {
    let m = grid.m;
    let ih = 1.0 / grid.h();
    let mut trip = Vec::with_capacity(2 * m);
    for i in 0..m {
        // cell i sits between faces i and i+1; interior face k is column k-1
        if i >= 1 {
            trip.push((i, i - 1, c(-ih)));
        }
        if i + 1 < m {
            trip.push((i, i, c(ih)));
        }
    }
    SparseMat::from_triplets(m, m - 1, trip)
}

/// Dirichlet pair: `grad0` from interior-face scalars to cells, `div = -grad0^T`.
pub fn build_grad0_div(grid: &SpaceGrid) -> (SpatialOperator, SpatialOperator) {
    let d = difference(grid);
    let div = d.transpose().scale(c(-1.0));
    (
        SpatialOperator { matrix: d, kind: OpKind::Grad0, grid: *grid },
        SpatialOperator { matrix: div, kind: OpKind::Div, grid: *grid },
    )
}

/// Neumann pair: `div0` from interior-face fluxes to cells, `grad = -div0^T`.
pub fn build_div0_grad(grid: &SpaceGrid) -> (SpatialOperator, SpatialOperator) {
    let d = difference(grid);
    let grad = d.transpose().scale(c(-1.0));
    (
        SpatialOperator { matrix: d, kind: OpKind::Div0, grid: *grid },
        SpatialOperator { matrix: grad, kind: OpKind::Grad, grid: *grid },
    )
}

/// Periodic gradient; row `r` is the face between cells `r` and `r + 1`.
pub fn build_periodic_grad(grid: &SpaceGrid) -> SpatialOperator {
    let m = grid.m;
    let ih = 1.0 / grid.h();
    let mut trip = Vec::with_capacity(2 * m);
    for r in 0..m {
        trip.push((r, r, c(-ih)));
        trip.push((r, (r + 1) % m, c(ih)));
    }
    SpatialOperator { matrix: SparseMat::from_triplets(m, m, trip), kind: OpKind::GradSharp, grid: *grid }
}

pub fn build_periodic_div(grid: &SpaceGrid) -> SpatialOperator {
    build_periodic_grad(grid).negative_adjoint().expect("registered pair")
}

/// `[[0, -C^*], [C, 0]]`, skew-Hermitian by construction.
pub fn skew_block(cop: &SpatialOperator) -> Result<SpatialOperator> {
    let adj = cop.negative_adjoint()?;
    let (p, q) = (cop.rows(), cop.cols());
    let matrix = SparseMat::block(&[vec![None, Some(&adj.matrix)], vec![Some(&cop.matrix), None]], &[q, p], &[q, p]);
    Ok(SpatialOperator { matrix, kind: OpKind::Block, grid: cop.grid })
}

/// Neumann block with the right end closed by `q(b) + beta u(b) = 0`.
///
/// `beta = i` gives a skew-Hermitian operator. Other values need
/// `allow_general` and `Re beta <= 0`, which keeps the block accretive.
pub fn robin_block(grid: &SpaceGrid, beta: C64, allow_general: bool) -> Result<SpatialOperator> {
    if beta != C64::new(0.0, 1.0) {
        if !allow_general {
            return invalid("Robin coefficient other than i requires the general flag");
        }
        if beta.re > 0.0 {
            return invalid(format!("Robin coefficient {beta} has positive real part"));
        }
    }
    let (_, grad) = build_div0_grad(grid);
    let blk = skew_block(&grad)?;
    let m = grid.m;
    let extra = SparseMat::from_triplets(blk.rows(), blk.cols(), vec![(m - 1, m - 1, -beta / grid.h())]);
    Ok(SpatialOperator { matrix: blk.matrix.add(&extra)?, kind: OpKind::Block, grid: *grid })
}

/// `C` restricted to `(ker C)^perp` and corestricted to `ran C`.
#[derive(Debug, Clone)]
pub struct CompressedOperator {
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `1 / sigma_min`
    pub inverse_norm: f64,
    pub singular_values: Vec<f64>,
}

pub fn range_compress(cop: &SpatialOperator, rel_tol: f64) -> Result<CompressedOperator> {
    compress_matrix(&cop.matrix.to_dense(), rel_tol)
}

pub fn compress_matrix(m: &CMat, rel_tol: f64) -> Result<CompressedOperator> {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Err(EvoError::Degenerate("operator has no range".into()));
    }
    let kept: Vec<f64> = sv.into_iter().filter(|&s| s > rel_tol * smax).collect();
    let smin = *kept.last().expect("sigma_max kept");
    Ok(CompressedOperator { rank: kept.len(), sigma_min: smin, sigma_max: smax, inverse_norm: 1.0 / smin, singular_values: kept })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Left,
    Right,
}

/// Where the scalar of a pair lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Cells,
    /// Dirichlet layout; the endpoint values are zero.
    InteriorFaces,
}

/// Endpoint value by linear extrapolation from the two nearest samples.
pub fn trace_1d(u: &[C64], layout: Layout, end: End) -> Result<C64> {
    match layout {
        Layout::InteriorFaces => Ok(c(0.0)),
        Layout::Cells => {
            let n = u.len();
            if n < 2 {
                return invalid("trace needs at least two cells");
            }
            Ok(match end {
                End::Left => 1.5 * u[0] - 0.5 * u[1],
                End::Right => 1.5 * u[n - 1] - 0.5 * u[n - 2],
            })
        }
    }
}

/// Discrete `L2` norm with cell weight `h`.
pub fn grid_norm(u: &[C64], h: f64) -> f64 {
    (h * u.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt()
}
