fn main() {
    std::process::exit(looplab::cli::run());
}
