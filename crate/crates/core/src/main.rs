fn main() {
    std::process::exit(pickwhy::cli::main_with_args(std::env::args_os()));
}
