fn main() {
    std::process::exit(kondo_core::cli::main_with_args(std::env::args_os()));
}
