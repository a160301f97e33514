use clap::Parser;

fn main() {
    let cli = breakthrough_cli::Cli::parse();
    if let Err(e) = breakthrough_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
