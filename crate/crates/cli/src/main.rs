use clap::Parser;
use oscar_bench::error::EXIT_INTERNAL;
use oscar_bench::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OSCAR_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => EXIT_INTERNAL,
    };
    std::process::exit(code);
}
