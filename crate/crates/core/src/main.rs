use clap::Parser;

use rdz_core::cli::{exit_code, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => {
            eprintln!(
                "{} finished; {} files in {}",
                manifest.command,
                manifest.files.len(),
                manifest.out_dir.display()
            );
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
