fn main() {
    std::process::exit(synthdesign::cli::main_with_args(std::env::args().collect()));
}
