fn main() {
    env_logger::init();
    std::process::exit(bodyfuse::cli::run(std::env::args()));
}
