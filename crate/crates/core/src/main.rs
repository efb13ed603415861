fn main() {
    std::process::exit(difw::cli::run(std::env::args_os()));
}
