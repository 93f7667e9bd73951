use clap::Parser;

use sgnn_cli::opts::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = sgnn_cli::run(cli) {
        // machine-readable error name first, then the human message
        eprintln!("error[{}]: {e}", e.name());
        std::process::exit(e.exit_code());
    }
}
