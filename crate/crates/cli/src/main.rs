use clap::Parser;

fn main() {
    let cli = domar_cli::Cli::parse();
    std::process::exit(domar_cli::run(cli));
}
