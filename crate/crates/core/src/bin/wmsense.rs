use clap::Parser;

fn main() {
    let cli = wmsense::cli::Cli::parse();
    std::process::exit(wmsense::cli::run(&cli));
}
