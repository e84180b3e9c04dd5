use clap::Parser;

fn main() {
    std::process::exit(conformal_cli::main_with(conformal_cli::Cli::parse()));
}
