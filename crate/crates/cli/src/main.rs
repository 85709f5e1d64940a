use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod cmd;
mod report;

use args::Cli;
use report::Report;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let name = cmd::name(&cli.command);
    match cmd::run(&cli.command) {
        Ok(rep) => {
            for c in rep.checks.iter().filter(|c| !c.pass) {
                eprintln!("check failed: {} = {:e} (limit {:e})", c.name, c.value, c.limit);
            }
            println!("{name}: {} ({} checks, outputs in {})", if rep.pass { "pass" } else { "FAIL" }, rep.checks.len(), cmd::out_dir(&cli.command).display());
            if rep.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(f) => {
            eprintln!("{name}: {f}");
            if f.exit_code() == 2 {
                // still leave a machine-readable record of the violated hypothesis
                let _ = Report::failed(name, &f).write(cmd::out_dir(&cli.command));
            }
            ExitCode::from(f.exit_code())
        }
    }
}
