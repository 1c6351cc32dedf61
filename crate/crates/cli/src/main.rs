//! `anova-power`: F-test power, guaranteed power, and minimal sample size
//! for balanced ANOVA classifications, plus a seeded Monte Carlo engine.

mod args;
mod cmds;
mod fmt;
mod parse;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let start = std::time::Instant::now();
    let out = match &cli.command {
        Command::Models(a) => cmds::models(a),
        Command::Power(a) => cmds::power(a),
        Command::Size(a) => cmds::size(a),
        Command::Simulate(a) => cmds::simulate(a),
        Command::Surface(a) => cmds::surface(a),
    };
    match out {
        Ok(output) => {
            println!("{}", output.render(cli.format, start.elapsed().as_secs_f64() * 1e3));
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(cmds::exit_code(&err));
        }
    }
}
