fn main() {
    std::process::exit(counsel_service::cli::run(std::env::args_os()));
}
