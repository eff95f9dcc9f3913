use clap::Parser;
use vpr_cli::{run, thread_cap, Cli, EXIT_OK};

fn main() {
    let cli = Cli::parse();
    let outcome = thread_cap(std::env::var("VPR_THREADS").ok().as_deref())
        .and_then(|threads| run(cli, threads));
    match outcome {
        Ok(()) => std::process::exit(EXIT_OK),
        Err(e) => {
            eprintln!("vpr: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
