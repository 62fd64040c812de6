fn main() {
    std::process::exit(entropy_lab::harness::cli::run(std::env::args_os()));
}
