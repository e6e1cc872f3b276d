fn main() {
    asmlm_cli::init_logging();
    std::process::exit(asmlm_cli::run(std::env::args_os()));
}
