use clap::Parser;

fn main() {
    std::process::exit(orthlap_cli::run(orthlap_cli::Cli::parse()));
}
