fn main() {
    std::process::exit(localrd::cli::main_with_args(std::env::args_os()));
}
