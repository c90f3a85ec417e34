use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = mixflow::app::Cli::parse();
    std::process::exit(mixflow::app::main_with(cli));
}
