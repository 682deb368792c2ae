use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = rshe::cli::Args::parse();
    std::process::exit(rshe::cli::main_with_args(args));
}
