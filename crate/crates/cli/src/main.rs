use clap::Parser;
use cohesion_cli::app::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(e) = run(cli, &mut out) {
        drop(out);
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
