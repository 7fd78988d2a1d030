use clap::Parser;
use lossprio::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
