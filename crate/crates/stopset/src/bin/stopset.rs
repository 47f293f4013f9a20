fn main() {
    std::process::exit(stopset::cli::run(std::env::args().collect()));
}
