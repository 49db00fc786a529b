fn main() {
    std::process::exit(forget_core::cli::main_with(std::env::args_os()));
}
