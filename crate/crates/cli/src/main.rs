use clap::Parser;
use gmki_cli::{configure_workers, execute, Cli};

fn main() {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|_| execute(cli));
    match result {
        Ok(line) => println!("{line}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
