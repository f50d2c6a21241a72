fn main() {
    std::process::exit(olion_harness::cli::main_with_args(std::env::args_os()));
}
