use clap::error::ErrorKind;
use clap::Parser;

use diakoptic_cli::{exit, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIAKOPTIC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::OK,
                _ => exit::ERROR,
            };
            // Printing only fails if the streams are gone.
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(run(cli));
}
