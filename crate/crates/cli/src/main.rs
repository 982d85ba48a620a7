// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod run;

use clap::Parser;

use args::{Cli, Command};
use run::{Finished, EXIT_STOPPED};

fn main() {
    let cli = Cli::parse();
    let out = match &cli.command {
        Command::Validate(a) => a.common.out.clone(),
        Command::Transport(a) => a.common.out.clone(),
        Command::Survival(a) => a.common.out.clone(),
        Command::Meander(a) => a.common.out.clone(),
        Command::Profile(a) => a.common.out.clone(),
        Command::Heat(a) => a.common.out.clone(),
        Command::Localtime(a) => a.common.out.clone(),
        Command::Llt(a) => a.common.out.clone(),
        Command::Reference(a) => a.common.out.clone(),
    };
    let code = match commands::dispatch(cli.command) {
        Ok(Finished::Done(())) => 0,
        Ok(Finished::Stopped(path)) => {
            eprintln!("stopped early; checkpoint at {}", path.display());
            EXIT_STOPPED
        }
        Err(e) => {
            let record = e.record();
            eprintln!("{record}");
            if out.is_dir() {
                let _ = std::fs::write(out.join("error.json"), format!("{record}\n"));
            }
            e.exit_code()
        }
    };
    std::process::exit(code);
}
