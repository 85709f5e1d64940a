use std::fs;
use std::io::Write;

use evoeq_core::dae::{
    consistent_subspace, dae_solve, laplace_solution_check, pair_index, pair_spectrum, weierstrass_form, wong_sequence,
    DaeTrajectory, MatrixPair, PairSpectrum, DEFAULT_TOL,
};
use evoeq_core::linalg::{c, CMat};
use evoeq_core::material::json::ComplexSpec;
use evoeq_core::C64;
use serde::Deserialize;
use serde_json::json;

use super::Ctx;
use crate::args::DaeArgs;
use crate::report::{usage, write_file, Bound, Failure, Report};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairFile {
    m0: Vec<Vec<ComplexSpec>>,
    m1: Vec<Vec<ComplexSpec>>,
}

fn square(rows: &[Vec<ComplexSpec>], what: &str) -> Result<CMat, Failure> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return usage(format!("{what} must be a non-empty square matrix"));
    }
    Ok(CMat::from_fn(n, n, |i, j| rows[i][j].value()))
}

fn builtin(name: &str) -> Result<(MatrixPair, Vec<f64>), Failure> {
    match name {
        "example-2x2" => Ok((MatrixPair::from_real(2, &[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0])?, vec![1.0, 0.0])),
        "rlc" => {
            // (i, v_C, v_L, v_R) series loop, R = 2, C = L = 1
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
            Ok((MatrixPair::from_real(4, &m0, &m1)?, vec![1.0, 0.5, -2.5, 2.0]))
        }
        other => usage(format!("unknown pair '{other}'; built-ins are example-2x2 and rlc")),
    }
}

fn write_trajectory(w: &mut dyn Write, tr: &DaeTrajectory) -> evoeq_core::Result<()> {
    let dim = tr.states.first().map_or(0, |s| s.len());
    let mut head = String::from("t");
    for k in 0..dim {
        head.push_str(&format!(",re{k},im{k}"));
    }
    writeln!(w, "{head}")?;
    for (t, s) in tr.times.iter().zip(&tr.states) {
        let mut line = format!("{t}");
        for v in s {
            line.push_str(&format!(",{},{}", v.re, v.im));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn run(a: &DaeArgs, ctx: &Ctx) -> Result<Report, Failure> {
    let (pair, default_u0, label) = match (&a.pair, &a.input) {
        (Some(name), None) => {
            let (p, u0) = builtin(name)?;
            (p, Some(u0), name.clone())
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let f: PairFile = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let p = MatrixPair::new(square(&f.m0, "m0")?, square(&f.m1, "m1")?)?;
            (p, None, path.display().to_string())
        }
        _ => return usage("give exactly one of --pair and --input"),
    };
    let u0: Vec<C64> = match (&a.u0, default_u0) {
        (Some(v), _) => v.iter().map(|&x| c(x)).collect(),
        (None, Some(v)) => v.into_iter().map(c).collect(),
        (None, None) => return usage("--u0 is required for pair files"),
    };
    if u0.len() != pair.n() {
        return usage(format!("--u0 has {} entries, the pair has size {}", u0.len(), pair.n()));
    }
    let (horizon, steps) = match a.common.grid {
        Some(g) if g.t0 != 0.0 => return usage("DAE trajectories start at t0 = 0"),
        Some(g) => ((g.n - 1) as f64 * g.dt, g.n - 1),
        None => (a.horizon, a.steps),
    };
    let w = weierstrass_form(&pair, DEFAULT_TOL)?;
    let index = pair_index(&pair)?;
    let wong = wong_sequence(&pair);
    let consistent = consistent_subspace(&pair)?;
    let tr = dae_solve(&pair, &u0, horizon, steps)?;
    let growth = match pair_spectrum(&pair)? {
        PairSpectrum::Finite(v) => v.iter().map(|z| z[0]).fold(f64::NEG_INFINITY, f64::max),
        PairSpectrum::WholePlane => unreachable!("regular pair"),
    };
    // resolvent check on a long run, far right of the spectrum
    let rho = if growth.is_finite() { (growth + 1.0).max(1.0) } else { 1.0 };
    let long_h = if growth.is_finite() { 40.0 / (rho - growth) } else { 40.0 };
    let long = dae_solve(&pair, &u0, long_h, 1024 * long_h.ceil() as usize)?;
    let laplace_gap = laplace_solution_check(&pair, &u0, &long, rho, 10.0)?;

    let mut rep = Report::new("dae");
    let scale = pair.m0.norm() + pair.m1.norm();
    let tol = a.common.tol.unwrap_or(1e-9);
    rep.check("weierstrass_residual_m0", w.residual_m0, Bound::AtMost, tol * scale.max(1.0));
    rep.check("weierstrass_residual_m1", w.residual_m1, Bound::AtMost, tol * scale.max(1.0));
    rep.check("laplace_gap", laplace_gap, Bound::AtMost, 1e-5);
    if let Some(g) = tr.drazin_gap {
        rep.check("drazin_gap", g, Bound::AtMost, tol);
    }
    write_file(&ctx.out, "trajectory.csv", &mut rep, |out| write_trajectory(out, &tr))?;
    let basis: Vec<Vec<[f64; 2]>> =
        (0..consistent.basis.ncols()).map(|j| consistent.basis.column(j).iter().map(|z| [z.re, z.im]).collect()).collect();
    rep.details = json!({
        "pair": label,
        "n": pair.n(),
        "weierstrass": w,
        "index": index,
        "wong": wong,
        "consistent": consistent,
        "consistent_basis": basis,
        "inconsistency": tr.inconsistency,
        "drazin_gap": tr.drazin_gap,
        "laplace": {"rho": rho, "max_freq": 10.0, "horizon": long_h, "gap": laplace_gap},
        "horizon": horizon,
        "steps": steps,
    });
    Ok(rep)
}
