fn main() {
    std::process::exit(switchoff_core::cli::main_with_args(std::env::args_os()));
}
