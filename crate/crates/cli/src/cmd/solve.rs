use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use evoeq_core::evo::{causality_of, preset, recommend_nu, solve, solve_ivp, EvoProblem, PresetParams, SolverConfig};
use evoeq_core::linalg::c;
use evoeq_core::material::json::parse_law;
use evoeq_core::material::Coeff;
use evoeq_core::signal::{make_grid, WeightedSignal};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{resolve_grid, Ctx};
use crate::args::{Rate, SolveArgs};
use crate::report::{usage, write_file, Bound, Failure, Report};

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Forcing {
    /// Gaussian in time on the first block, with a half-sine spatial profile.
    Pulse {
        #[serde(default = "one")]
        center: f64,
        #[serde(default = "tenth")]
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Zero,
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

impl Default for Forcing {
    fn default() -> Self {
        Forcing::Pulse { center: 1.0, width: 0.1, amplitude: 1.0 }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProblemFile {
    preset: Option<String>,
    params: PresetParams,
    /// Material law replacing the preset's, in the JSON law grammar.
    law: Option<Value>,
    /// `[t0, dt, n]`
    grid: Option<[f64; 3]>,
    /// Number or `"auto"`.
    nu: Option<Value>,
    forcing: Forcing,
    ivp: Option<String>,
}

fn read_problem(path: &Path) -> Result<ProblemFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn rate_from_json(v: &Value) -> Result<Rate, Failure> {
    match v {
        Value::String(s) => s.parse().map_err(Failure::Usage),
        Value::Number(n) => n.as_f64().map(Rate::Value).filter(|r| matches!(r, Rate::Value(x) if *x > 0.0)).ok_or_else(|| {
            Failure::Usage(format!("nu must be positive, got {n}"))
        }),
        _ => usage("nu must be a number or \"auto\""),
    }
}

pub fn run(a: &SolveArgs, ctx: &Ctx) -> Result<Report, Failure> {
    let mut file = match &a.input {
        Some(p) => read_problem(p)?,
        None => ProblemFile::default(),
    };
    let name = a.preset.clone().or(file.preset.take()).ok_or_else(|| Failure::Usage("give --preset or a problem file with \"preset\"".into()))?;
    if let Some(sp) = a.common.space {
        file.params.length = sp.b - sp.a;
        file.params.cells = sp.m;
    }
    let p = preset(&name, &file.params)?;
    let law = match &file.law {
        Some(v) => {
            let law = parse_law(&v.to_string(), Some(p.law.dim))?;
            if law.dim != p.law.dim {
                return usage(format!("law has dimension {}, preset state {}", law.dim, p.law.dim));
            }
            law
        }
        None => p.law.clone(),
    };
    let g = resolve_grid(a.common.grid, file.grid, (-1.0, 1.0 / 64.0, 1024))?;
    let grid = make_grid(g.0, g.1, g.2)?;
    let mut cfg = SolverConfig::default();
    if let Some(t) = a.common.tol {
        cfg.residual_bound = t;
    }
    let rate = match (a.common.nu, &file.nu) {
        (Some(r), _) => r,
        (None, Some(v)) => rate_from_json(v)?,
        (None, None) => Rate::Auto,
    };
    let nu = match rate {
        Rate::Value(v) => v,
        Rate::Auto => recommend_nu(&law, Some(grid.window()), &cfg)?.0,
    };
    let ivp = a.ivp.clone().or(file.ivp.take());
    let mut rep = Report::new("solve");
    let (sol, forcing, onset, attainment) = match ivp.as_deref() {
        Some("sin-mode") => {
            if file.law.is_some() {
                return usage("--ivp needs the preset's own law");
            }
            let Some((m0, m1)) = &p.pair else {
                return usage(format!("preset '{name}' is not of the form M0 + z^-1 M1; no initial value problem"));
            };
            let b0 = &p.blocks[0];
            let pos = if b0.on_cells { p.space.centers() } else { p.space.interior_faces() };
            let len = p.space.b - p.space.a;
            let mut u0 = vec![c(0.0); p.law.dim];
            for (k, x) in pos.iter().enumerate() {
                u0[k] = c((PI * (x - p.space.a) / len).sin());
            }
            let s = solve_ivp(&Coeff::Diag(m0.clone()), &Coeff::Diag(m1.clone()), &p.op, &u0, grid, nu, p.space.h(), &cfg)?;
            let f = WeightedSignal::zeros(grid, nu, p.law.dim);
            (s.solution, f, 0.0, Some((s.attainment, s.attainment_time)))
        }
        Some(other) => return usage(format!("unknown initial value '{other}'; only sin-mode")),
        None => {
            let d0 = p.blocks[0].dim;
            let (f, onset) = match file.forcing {
                Forcing::Pulse { center, width, amplitude } => {
                    if !(width > 0.0) {
                        return usage("pulse width must be positive");
                    }
                    let f = WeightedSignal::from_fn(grid, nu, p.law.dim, |t, o| {
                        let b = amplitude * (-((t - center) / width).powi(2)).exp();
                        for (k, x) in o.iter_mut().take(d0).enumerate() {
                            *x = c(b * (PI * (k + 1) as f64 / (d0 + 1) as f64).sin());
                        }
                    });
                    (f, center - 8.0 * width)
                }
                Forcing::Zero => (WeightedSignal::zeros(grid, nu, p.law.dim), grid.t0),
            };
            let s = solve(&EvoProblem::new(law, p.op.clone(), f.clone())?, &cfg)?;
            (s, f, onset, None)
        }
    };
    rep.nu = Some(nu);
    rep.c = Some(sol.certificate.c);
    rep.check("certificate_c", sol.certificate.c, Bound::Above, 0.0);
    rep.check("residual", sol.residual, Bound::AtMost, cfg.residual_bound);
    rep.check("norm_ratio", sol.norm_ratio, Bound::AtMost, 1.0 + 1e-6);
    rep.check("wrap", (-nu * grid.window()).exp(), Bound::AtMost, cfg.wrap_tol);
    // the step at zero of an initial value leaks ahead at grid resolution,
    // so the mass is only reported there
    let cause = causality_of(&sol.u, &forcing, onset);
    if attainment.is_none() {
        rep.check("pre_onset_mass", cause.pre_mass, Bound::AtMost, cause.threshold);
    }
    write_file(&ctx.out, "solution.csv", &mut rep, |w| sol.u.write_csv(w))?;
    let blocks: Vec<Value> = p.blocks.iter().map(|b| json!({"name": b.name, "dim": b.dim, "on_cells": b.on_cells})).collect();
    rep.details = json!({
        "preset": name,
        "signal": sol.u.header(),
        "space": {"a": p.space.a, "b": p.space.b, "m": p.space.m},
        "blocks": blocks,
        "certificate": sol.certificate,
        "solution": sol,
        "ivp": ivp,
        "attainment": attainment.map(|(v, t)| json!({"value": v, "time": t})),
        "causality": cause,
    });
    Ok(rep)
}
