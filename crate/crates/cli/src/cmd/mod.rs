use std::fs;
use std::path::PathBuf;

use crate::args::{Command, GridSpec};
use crate::report::{Failure, Report};

mod dae;
mod homogenize;
mod misc;
mod solve;

pub struct Ctx {
    pub out: PathBuf,
}

pub fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Solve(_) => "solve",
        Command::Ode(_) => "ode",
        Command::Dae(_) => "dae",
        Command::Homogenize(_) => "homogenize",
        Command::Stability(_) => "stability",
        Command::Transform(_) => "transform",
    }
}

pub fn out_dir(cmd: &Command) -> &PathBuf {
    match cmd {
        Command::Solve(a) => &a.common.out,
        Command::Ode(a) => &a.common.out,
        Command::Dae(a) => &a.common.out,
        Command::Homogenize(a) => &a.common.out,
        Command::Stability(a) => &a.common.out,
        Command::Transform(a) => &a.common.out,
    }
}

/// Runs the command and writes its report.
pub fn run(cmd: &Command) -> Result<Report, Failure> {
    let out = out_dir(cmd).clone();
    fs::create_dir_all(&out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
    let ctx = Ctx { out };
    let mut rep = match cmd {
        Command::Solve(a) => solve::run(a, &ctx),
        Command::Ode(a) => misc::ode(a, &ctx),
        Command::Dae(a) => dae::run(a, &ctx),
        Command::Homogenize(a) => homogenize::run(a, &ctx),
        Command::Stability(a) => misc::stability(a, &ctx),
        Command::Transform(a) => misc::transform(a, &ctx),
    }?;
    rep.write(&ctx.out)?;
    Ok(rep)
}

/// Flag, then file value, then default.
pub fn resolve_grid(flag: Option<GridSpec>, file: Option<[f64; 3]>, default: (f64, f64, usize)) -> Result<(f64, f64, usize), Failure> {
    if let Some(g) = flag {
        return Ok((g.t0, g.dt, g.n));
    }
    match file {
        Some([t0, dt, n]) => {
            if n.fract() != 0.0 || n < 2.0 {
                return Err(Failure::Usage(format!("grid sample count must be an integer >= 2, got {n}")));
            }
            Ok((t0, dt, n as usize))
        }
        None => Ok(default),
    }
}
