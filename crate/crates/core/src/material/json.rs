//! JSON expression format for material laws.
//!
//! Every node is an object with a `kind` tag. Leaves take an optional `dim`
//! (inherited from the enclosing node otherwise) and a `coeff`, written as a
//! number, a `[re, im]` pair, `{"diag": [...]}` or `{"matrix": [[...]]}`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{Coeff, MaterialLaw};
use crate::error::{EvoError, Result};
use crate::linalg::CMat;
use crate::time_ops::Kernel;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    pub fn value(self) -> C64 {
        match self {
            ComplexSpec::Real(x) => C64::new(x, 0.0),
            ComplexSpec::Pair([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CoeffSpec {
    Scalar(ComplexSpec),
    Diag { diag: Vec<ComplexSpec> },
    Matrix { matrix: Vec<Vec<ComplexSpec>> },
}

impl Default for CoeffSpec {
    fn default() -> Self {
        CoeffSpec::Scalar(ComplexSpec::Real(1.0))
    }
}

impl CoeffSpec {
    fn build(&self) -> Result<Coeff> {
        Ok(match self {
            CoeffSpec::Scalar(s) => Coeff::Scalar(s.value()),
            CoeffSpec::Diag { diag } => Coeff::Diag(diag.iter().map(|x| x.value()).collect()),
            CoeffSpec::Matrix { matrix } => {
                let n = matrix.len();
                if matrix.iter().any(|r| r.len() != n) {
                    return Err(EvoError::ShapeMismatch("coefficient matrix must be square".into()));
                }
                Coeff::Dense(CMat::from_fn(n, n, |i, j| matrix[i][j].value()))
            }
        })
    }

    fn natural_dim(&self) -> Option<usize> {
        match self {
            CoeffSpec::Scalar(_) => None,
            CoeffSpec::Diag { diag } => Some(diag.len()),
            CoeffSpec::Matrix { matrix } => Some(matrix.len()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Const {
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        coeff: CoeffSpec,
    },
    Zinv {
        #[serde(default)]
        dim: Option<usize>,
        k: u32,
        #[serde(default)]
        coeff: CoeffSpec,
    },
    Series {
        #[serde(default)]
        dim: Option<usize>,
        coeffs: Vec<CoeffSpec>,
        radius: f64,
    },
    Delay {
        #[serde(default)]
        dim: Option<usize>,
        h: f64,
        #[serde(default)]
        coeff: CoeffSpec,
    },
    Frac {
        #[serde(default)]
        dim: Option<usize>,
        alpha: f64,
        #[serde(default)]
        coeff: CoeffSpec,
    },
    /// Sampled kernel: either `dt` with `values`, or `pairs` of `[t, k(t)]`.
    Kernel {
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        pairs: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        coeff: CoeffSpec,
    },
    Sum {
        terms: Vec<LawSpec>,
    },
    Product {
        factors: Vec<LawSpec>,
    },
    Scale {
        factor: ComplexSpec,
        child: Box<LawSpec>,
    },
    Block {
        dims: Vec<usize>,
        blocks: Vec<Vec<Option<LawSpec>>>,
    },
    Inverse {
        child: Box<LawSpec>,
        #[serde(default)]
        onset: Option<f64>,
    },
}

fn leaf_dim(dim: Option<usize>, coeff: Option<&CoeffSpec>, inherited: Option<usize>) -> Result<usize> {
    dim.or_else(|| coeff.and_then(|c| c.natural_dim()))
        .or(inherited)
        .ok_or_else(|| EvoError::Parse("cannot infer the dimension of a leaf; add \"dim\"".into()))
}

impl LawSpec {
    pub fn build(&self, inherited: Option<usize>) -> Result<MaterialLaw> {
        match self {
            LawSpec::Const { dim, coeff } => MaterialLaw::constant(leaf_dim(*dim, Some(coeff), inherited)?, coeff.build()?),
            LawSpec::Zinv { dim, k, coeff } => {
                MaterialLaw::zinv_pow(leaf_dim(*dim, Some(coeff), inherited)?, *k, coeff.build()?)
            }
            LawSpec::Series { dim, coeffs, radius } => {
                let d = leaf_dim(*dim, coeffs.iter().find(|c| c.natural_dim().is_some()), inherited)?;
                let cs = coeffs.iter().map(|c| c.build()).collect::<Result<Vec<_>>>()?;
                MaterialLaw::series(d, cs, *radius)
            }
            LawSpec::Delay { dim, h, coeff } => MaterialLaw::delay(leaf_dim(*dim, Some(coeff), inherited)?, *h, coeff.build()?),
            LawSpec::Frac { dim, alpha, coeff } => {
                MaterialLaw::frac_pow(leaf_dim(*dim, Some(coeff), inherited)?, *alpha, coeff.build()?)
            }
            LawSpec::Kernel { dim, dt, values, pairs, coeff } => {
                let kernel = match (dt, values, pairs) {
                    (Some(dt), Some(v), None) => Kernel::new(*dt, v.clone())?,
                    (None, None, Some(p)) => {
                        let p: Vec<(f64, f64)> = p.iter().map(|x| (x[0], x[1])).collect();
                        Kernel::from_pairs(&p)?
                    }
                    _ => return Err(EvoError::Parse("kernel needs either dt and values, or pairs".into())),
                };
                MaterialLaw::kernel_lt(leaf_dim(*dim, Some(coeff), inherited)?, kernel, coeff.build()?)
            }
            LawSpec::Sum { terms } => {
                let d = first_dim(terms.iter(), inherited)?;
                MaterialLaw::sum(terms.iter().map(|t| t.build(Some(d))).collect::<Result<_>>()?)
            }
            LawSpec::Product { factors } => {
                let d = first_dim(factors.iter(), inherited)?;
                MaterialLaw::product(factors.iter().map(|t| t.build(Some(d))).collect::<Result<_>>()?)
            }
            LawSpec::Scale { factor, child } => Ok(MaterialLaw::scale(factor.value(), child.build(inherited)?)),
            LawSpec::Block { dims, blocks } => {
                let mut out = Vec::with_capacity(blocks.len());
                for (r, row) in blocks.iter().enumerate() {
                    let d = *dims
                        .get(r)
                        .ok_or_else(|| EvoError::ShapeMismatch("more block rows than dims".into()))?;
                    let built = row.iter().map(|b| b.as_ref().map(|b| b.build(Some(d))).transpose()).collect::<Result<Vec<_>>>()?;
                    out.push(built);
                }
                MaterialLaw::block(out, dims.clone())
            }
            LawSpec::Inverse { child, onset } => {
                let ch = child.build(inherited)?;
                match onset {
                    Some(o) => MaterialLaw::inverse_with_onset(ch, *o),
                    None => MaterialLaw::inverse(ch),
                }
            }
        }
    }

    /// Dimension the node fixes by itself, if any.
    fn own_dim(&self) -> Option<usize> {
        match self {
            LawSpec::Const { dim, coeff } | LawSpec::Zinv { dim, coeff, .. } | LawSpec::Delay { dim, coeff, .. } => {
                dim.or(coeff.natural_dim())
            }
            LawSpec::Frac { dim, coeff, .. } | LawSpec::Kernel { dim, coeff, .. } => dim.or(coeff.natural_dim()),
            LawSpec::Series { dim, coeffs, .. } => dim.or_else(|| coeffs.iter().find_map(|c| c.natural_dim())),
            LawSpec::Sum { terms } => terms.iter().find_map(|t| t.own_dim()),
            LawSpec::Product { factors } => factors.iter().find_map(|t| t.own_dim()),
            LawSpec::Scale { child, .. } | LawSpec::Inverse { child, .. } => child.own_dim(),
            LawSpec::Block { dims, .. } => Some(dims.iter().sum()),
        }
    }
}

fn first_dim<'a>(mut it: impl Iterator<Item = &'a LawSpec>, inherited: Option<usize>) -> Result<usize> {
    it.find_map(|t| t.own_dim())
        .or(inherited)
        .ok_or_else(|| EvoError::Parse("cannot infer the dimension of a sum or product".into()))
}

pub fn parse_law(text: &str, dim: Option<usize>) -> Result<MaterialLaw> {
    let spec: LawSpec = serde_json::from_str(text).map_err(|e| EvoError::Parse(e.to_string()))?;
    spec.build(dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::LawValue;

    #[test]
    fn parses_heat_law() {
        let text = r#"{"kind":"block","dims":[2,3],"blocks":[[{"kind":"const"},null],[null,{"kind":"zinv","k":1}]]}"#;
        let m = parse_law(text, None).unwrap();
        assert_eq!(m.dim, 5);
        assert_eq!(m.abscissa(), 0.0);
        let v = m.evaluate(C64::new(2.0, 0.0)).unwrap();
        assert_eq!(v, LawValue::Diag(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.5, 0.0), C64::new(0.5, 0.0), C64::new(0.5, 0.0)]));
    }

    #[test]
    fn parses_nested_forms() {
        let text = r#"{"kind":"sum","terms":[
            {"kind":"const","coeff":{"matrix":[[1,[0,1]],[0,2]]}},
            {"kind":"scale","factor":[0.5,0],"child":{"kind":"frac","alpha":0.5}},
            {"kind":"inverse","child":{"kind":"sum","terms":[{"kind":"const"},{"kind":"delay","h":-1,"coeff":0.5}]}},
            {"kind":"kernel","pairs":[[0,1],[0.5,0.5],[1,0.25]]}
        ]}"#;
        let m = parse_law(text, None).unwrap();
        assert_eq!(m.dim, 2);
        let v = m.evaluate(C64::new(1.0, 1.0)).unwrap().to_dense();
        assert_eq!(v[(1, 0)], C64::new(0.0, 0.0));
        assert_eq!(v[(0, 1)], C64::new(0.0, 1.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_law(r#"{"kind":"warp"}"#, Some(1)), Err(EvoError::Parse(_))));
        assert!(matches!(parse_law(r#"{"kind":"const"}"#, None), Err(EvoError::Parse(_))));
        assert!(parse_law(r#"{"kind":"delay","h":1}"#, Some(1)).is_err());
        assert!(parse_law(r#"{"kind":"kernel","dt":0.1}"#, Some(1)).is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"{"kind":"inverse","child":{"kind":"sum","terms":[{"kind":"zinv","k":1},{"kind":"const","coeff":0.8}]}}"#;
        let spec: LawSpec = serde_json::from_str(text).unwrap();
        let again: LawSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, again);
    }
}
