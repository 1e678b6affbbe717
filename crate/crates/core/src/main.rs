use clap::Parser;

fn main() {
    let cli = hmcf::cli::Cli::parse();
    std::process::exit(hmcf::cli::run(cli));
}
