use clap::Parser;
use hybrid_ad::Cli;

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = hybrid_ad::run(cli, &mut stdout.lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
