use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match bncl_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                bncl_cli::EXIT_VALIDATION
            } else {
                0
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = bncl_cli::run(cli) {
        eprintln!("error {e}");
        std::process::exit(e.exit_code());
    }
}
