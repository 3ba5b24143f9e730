use clap::Parser;
use jsrkit::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
