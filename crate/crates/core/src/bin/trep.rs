use clap::Parser;

use trep::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    match cli::run(&args) {
        Ok(out) => println!("{}", out.summary),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
