fn main() {
    std::process::exit(hawkes_score::cli::run());
}
