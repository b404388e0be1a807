fn main() {
    std::process::exit(quadpi::cli::run(std::env::args_os()));
}
