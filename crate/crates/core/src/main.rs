fn main() {
    std::process::exit(stochlq::cli::run());
}
