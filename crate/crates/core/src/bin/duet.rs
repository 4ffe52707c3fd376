fn main() {
    std::process::exit(duet_core::cli::main_with_args(std::env::args_os()));
}
