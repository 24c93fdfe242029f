use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = povmap::args::Cli::parse();
    if let Err(e) = povmap::commands::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
