use evoeq_core::asymptotics::homogenization::{homogenized_matrix, CellProblem};
use evoeq_core::asymptotics::sweep::{oscillation_sweep, SweepParams};
use evoeq_core::linalg::c;
use evoeq_core::signal::make_grid;
use serde_json::json;

use super::Ctx;
use crate::args::{HomogenizeArgs, Rate};
use crate::report::{usage, write_file, Bound, Failure, Report};

fn piecewise(coeff: &[f64], x: f64) -> f64 {
    let k = ((x * coeff.len() as f64).floor() as usize).min(coeff.len() - 1);
    coeff[k]
}

fn harmonic(v: &[f64]) -> f64 {
    v.len() as f64 / v.iter().map(|x| 1.0 / x).sum::<f64>()
}

pub fn run(a: &HomogenizeArgs, ctx: &Ctx) -> Result<Report, Failure> {
    let mut rep = Report::new("homogenize");
    match a.problem.as_str() {
        id @ ("ode-sin-memory" | "wave-periodic") => {
            let mut params = SweepParams::for_problem(id)?;
            if let Some(g) = a.common.grid {
                params.grid = make_grid(g.t0, g.dt, g.n)?;
            }
            match a.common.nu {
                Some(Rate::Value(v)) => params.nu = v,
                Some(Rate::Auto) | None => {}
            }
            if a.coeff.is_some() {
                return usage("--coeff applies to the cell problems only");
            }
            let n = a.n.clone().unwrap_or_else(|| if id == "ode-sin-memory" { vec![128] } else { vec![4, 8, 16, 32, 64] });
            let table = oscillation_sweep(id, &n, &params)?;
            rep.nu = Some(params.nu);
            if id == "ode-sin-memory" {
                rep.check("series_tail_bound", table.reference_value, Bound::AtMost, a.common.tol.unwrap_or(1e-6));
            } else {
                let h = harmonic(&[params.a_lo, params.a_hi]);
                rep.check("a_hom_vs_harmonic", (table.reference_value - h).abs(), Bound::AtMost, 1e-8 * h);
            }
            write_file(&ctx.out, "table.csv", &mut rep, |w| table.write_csv(w))?;
            let decreasing = table.rows.windows(2).all(|w| w[1].error < w[0].error);
            rep.details = json!({"table": table, "strictly_decreasing": decreasing});
        }
        "cell-1d" | "laminate-2d" => {
            let Some(coeff) = a.coeff.as_deref() else {
                return usage("--coeff is required for the cell problems");
            };
            if coeff.is_empty() || coeff.iter().any(|&x| !(x > 0.0)) {
                return usage("coefficient values must be positive");
            }
            let m = a.common.space.map_or(a.cells, |s| s.m);
            let tol = a.common.tol.unwrap_or(1e-8);
            let (p, expect) = if a.problem == "cell-1d" {
                (CellProblem::from_fn_1d(m, |x| c(piecewise(coeff, x)))?, vec![harmonic(coeff)])
            } else {
                let arith = coeff.iter().sum::<f64>() / coeff.len() as f64;
                (CellProblem::from_fn_2d(m, |x, _| c(piecewise(coeff, x)))?, vec![harmonic(coeff), arith])
            };
            let h = homogenized_matrix(&p)?;
            for (i, e) in expect.iter().enumerate() {
                rep.check(&format!("a_hom_{i}{i}_vs_layered_mean"), (h.a_hom[(i, i)] - e).norm(), Bound::AtMost, tol * e);
            }
            rep.check("hermitian_defect", h.hermitian_defect, Bound::AtMost, tol);
            rep.check("re_lower", h.re_lower, Bound::Above, 0.0);
            rep.details = json!({"cells": m, "coefficient": coeff, "homogenized": h, "layered_means": expect});
        }
        other => return Err(Failure::Usage(format!("unknown problem id '{other}'"))),
    }
    Ok(rep)
}
