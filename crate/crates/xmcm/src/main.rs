fn main() {
    std::process::exit(xmcm::cli::run(std::env::args_os()));
}
