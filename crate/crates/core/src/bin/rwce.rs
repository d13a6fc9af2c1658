fn main() {
    std::process::exit(rwce_core::cli::main_with_args(std::env::args_os()));
}
