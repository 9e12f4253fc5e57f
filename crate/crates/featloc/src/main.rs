fn main() {
    std::process::exit(featloc::harness::cli::run(std::env::args()));
}
