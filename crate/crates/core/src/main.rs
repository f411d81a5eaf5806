fn main() {
    std::process::exit(expdirac::cli::main_with_args(std::env::args_os()));
}
