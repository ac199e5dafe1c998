fn main() {
    std::process::exit(skewblend::cli::run(std::env::args_os()));
}
