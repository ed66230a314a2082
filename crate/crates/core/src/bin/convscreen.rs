use clap::Parser;

fn main() {
    let cli = convscreen::cli::Cli::parse();
    if let Err(e) = convscreen::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
