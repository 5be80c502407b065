fn main() {
    std::process::exit(harsanyinet::cli::run());
}
