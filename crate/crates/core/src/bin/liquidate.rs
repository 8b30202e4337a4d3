fn main() {
    std::process::exit(liquidation::cli::run(std::env::args_os()));
}
