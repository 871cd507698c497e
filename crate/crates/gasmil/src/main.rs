use std::process::ExitCode;

use clap::Parser;
use gasmil::cli::Cli;

fn main() -> ExitCode {
    // clap handles --help/usage errors itself with exit code 2
    let cli = Cli::parse();
    let cap = match gasmil::thread_cap_from_env() {
        Ok(cap) => cap,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Some(threads) = cap {
        // a failure here means the pool was already built, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match gasmil::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
