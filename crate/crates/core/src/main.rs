use clap::Parser;

use fermion_unravel::cli;

fn main() {
    let args = cli::Cli::parse();
    if let Err(err) = cli::run(args) {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
