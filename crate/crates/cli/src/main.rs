use clap::Parser;

fn main() {
    let cli = qop_cli::Cli::parse();
    std::process::exit(qop_cli::run(cli));
}
