use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ANISO_LOG", "warn")).init();
    let cli = aniso_hardy_cli::Cli::parse();
    std::process::exit(aniso_hardy_cli::run(&cli));
}
