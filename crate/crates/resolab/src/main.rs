use clap::Parser;

fn main() {
    let cli = resolab::Cli::parse();
    std::process::exit(resolab::run(&cli));
}
