fn main() {
    env_logger::init();
    std::process::exit(qlidar::cli::run(std::env::args_os()));
}
