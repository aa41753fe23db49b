use clap::Parser;
use pse_distill::cli;

fn main() {
    let args = cli::Cli::parse();
    if let Err(err) = cli::run(args) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
