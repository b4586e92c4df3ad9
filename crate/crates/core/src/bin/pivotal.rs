fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PIVOTAL_LOG", "warn")).init();
    let code = pivotal::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
