use std::f64::consts::PI;
use std::fs;
use std::io::BufReader;

use evoeq_core::asymptotics::{decay_rate_bound, StabilitySetup};
use evoeq_core::linalg::c;
use evoeq_core::ode::{solve_classical_ivp, solve_ivp_delay, IvpOptions};
use evoeq_core::signal::{make_grid, SignalHeader, WeightedSignal};
use evoeq_core::spatial::SpaceGrid;
use evoeq_core::transform::{forward, inverse};
use evoeq_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{resolve_grid, Ctx};
use crate::args::{OdeArgs, Rate, StabilityArgs, TransformArgs};
use crate::report::{usage, write_file, Bound, Failure, Report};

/// Solution of `u' = -u(t - 1)`, `u = 1` on `[-1, 0]`, on `[-1, 3]`.
fn delay_exact(t: f64) -> Option<f64> {
    let (s1, s2) = (t - 1.0, t - 2.0);
    match t {
        t if t <= 0.0 => Some(1.0),
        t if t <= 1.0 => Some(1.0 - t),
        t if t <= 2.0 => Some(1.0 - t + s1 * s1 / 2.0),
        t if t <= 3.0 => Some(1.0 - t + s1 * s1 / 2.0 - s2 * s2 * s2 / 6.0),
        _ => None,
    }
}

pub fn ode(a: &OdeArgs, ctx: &Ctx) -> Result<Report, Failure> {
    let mut rep = Report::new("ode");
    let tol = a.common.tol.unwrap_or(1e-3);
    match a.problem.as_str() {
        "delay" => {
            let (t0, dt, n) = resolve_grid(a.common.grid, None, (0.0, 1.0 / 256.0, 1024))?;
            if t0 != 0.0 {
                return usage("the delay problem starts at t0 = 0");
            }
            let nu = match a.common.nu {
                Some(Rate::Value(v)) => v,
                _ => 2.0,
            };
            let u = solve_ivp_delay(|_, _, y, o| o[0] = -y[0], (0.0, 1.0), 1.0, |_, o| o[0] = c(1.0), 1, dt, n, nu, 1e-13)?;
            let err = (0..u.grid.n)
                .filter_map(|j| delay_exact(u.grid.t(j)).map(|e| (u.sample(j)[0].re - e).abs()))
                .fold(0.0, f64::max);
            rep.nu = Some(nu);
            rep.check("max_error_vs_steps", err, Bound::AtMost, tol);
            write_file(&ctx.out, "trajectory.csv", &mut rep, |w| u.write_csv(w))?;
            rep.details = json!({"problem": "delay", "equation": "u'(t) = -u(t - 1), u = 1 on [-1, 0]", "signal": u.header()});
        }
        "logistic" => {
            let (t0, dt, n) = resolve_grid(a.common.grid, None, (0.0, 1.0 / 256.0, 1025))?;
            let x0 = 0.1;
            // |d/dx x(1 - x)| <= 1 + 2 (x0 + radius) on the tube
            let opts = IvpOptions { radius: 1.0, lipschitz: 1.0 + 2.0 * (x0 + 1.0), steps: n - 1, tol: 1e-13, ..Default::default() };
            let opts = match a.common.nu {
                Some(Rate::Value(v)) => IvpOptions { nu: v, ..opts },
                _ => opts,
            };
            let tr = solve_classical_ivp(|_, x, o| o[0] = x[0] * (1.0 - x[0]), t0, &[c(x0)], dt * (n - 1) as f64, &opts)?;
            let exact = |t: f64| 1.0 / (1.0 + (1.0 / x0 - 1.0) * (-(t - t0)).exp());
            let err = tr.times.iter().zip(&tr.states).map(|(&t, s)| (s[0].re - exact(t)).abs()).fold(0.0, f64::max);
            rep.check("max_error_vs_closed_form", err, Bound::AtMost, tol);
            write_file(&ctx.out, "trajectory.csv", &mut rep, |w| {
                writeln!(w, "t,re0,im0")?;
                for (t, s) in tr.times.iter().zip(&tr.states) {
                    writeln!(w, "{t},{},{}", s[0].re, s[0].im)?;
                }
                Ok(())
            })?;
            rep.details = json!({
                "problem": "logistic",
                "equation": "x' = x (1 - x), x(t0) = 0.1",
                "requested_delta": tr.requested_delta,
                "achieved_delta": tr.achieved_delta,
                "iterations": tr.iterations,
            });
        }
        other => return usage(format!("unknown ode problem '{other}'; use delay or logistic")),
    }
    Ok(rep)
}

pub fn stability(a: &StabilityArgs, ctx: &Ctx) -> Result<Report, Failure> {
    let _ = ctx;
    let sp = a.common.space.map_or((0.0, 1.0, 64), |s| (s.a, s.b, s.m));
    let grid = SpaceGrid::new(sp.0, sp.1, sp.2)?;
    // parameter conditions here are the model's stability hypotheses
    let setup = match a.model.as_str() {
        "heat" => StabilitySetup::heat(&grid, a.a),
        "dpl" => StabilitySetup::dpl(&grid, a.s_q, a.s_theta, a.rho1),
        "delay-heat" => StabilitySetup::delay_heat(&grid, a.a, a.b, a.delay),
        other => return usage(format!("unknown model '{other}'; use heat, dpl or delay-heat")),
    }
    .map_err(|e| Failure::Hypothesis(e.to_string()))?;
    let bound = decay_rate_bound(&setup)?;
    let mut rep = Report::new("stability");
    rep.check("rho0", bound.rho0, Bound::Above, 0.0);
    rep.details = json!({"model": a.model, "space": {"a": sp.0, "b": sp.1, "m": sp.2}, "bound": bound});
    Ok(rep)
}

fn builtin_signal(name: &str, a: &TransformArgs) -> Result<WeightedSignal, Failure> {
    let (t0, dt, n) = resolve_grid(a.common.grid, None, (-1.0, 1.0 / 64.0, 1024))?;
    let grid = make_grid(t0, dt, n)?;
    let nu = match a.common.nu {
        Some(Rate::Value(v)) => v,
        _ => 1.0,
    };
    match name {
        "pulse" => Ok(WeightedSignal::from_real_fn(grid, nu, |t| (-(t - 1.0).powi(2) / 0.02).exp() * (2.0 * PI * t).cos())),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
            Ok(WeightedSignal::from_fn(grid, nu, 1, |_, o| o[0] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        }
        other => usage(format!("unknown signal '{other}'; use pulse or random")),
    }
}

pub fn transform(a: &TransformArgs, ctx: &Ctx) -> Result<Report, Failure> {
    let f = match &a.input {
        Some(path) => {
            let hpath = a.header.clone().unwrap_or_else(|| path.with_extension("json"));
            let text = fs::read_to_string(&hpath).map_err(|e| Failure::Usage(format!("{}: {e}", hpath.display())))?;
            let header: SignalHeader = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", hpath.display())))?;
            let file = fs::File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            WeightedSignal::read_csv(&header, BufReader::new(file))?
        }
        None => builtin_signal(&a.signal, a)?,
    };
    let spec = forward(&f);
    let back = inverse(&spec);
    let norm = f.norm().max(f64::MIN_POSITIVE);
    let tol = a.common.tol.unwrap_or(1e-12);
    let mut rep = Report::new("transform");
    rep.nu = Some(f.nu);
    rep.check("plancherel_gap", (spec.norm() - f.norm()).abs() / norm, Bound::AtMost, tol);
    rep.check("round_trip", back.sub(&f)?.norm() / norm, Bound::AtMost, tol);
    write_file(&ctx.out, "spectrum.csv", &mut rep, |w| spec.write_csv(w))?;
    rep.details = json!({"signal": f.header(), "norm": f.norm()});
    Ok(rep)
}
