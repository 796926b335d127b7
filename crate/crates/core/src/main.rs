fn main() {
    std::process::exit(stockloan::cli::run(std::env::args_os()));
}
