use clap::Parser;

fn main() {
    let cli = pension_cli::Cli::parse();
    std::process::exit(pension_cli::run(&cli));
}
