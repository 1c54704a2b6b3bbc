fn main() {
    std::process::exit(difflle::cli::dispatch(std::env::args().collect()));
}
