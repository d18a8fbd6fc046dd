fn main() {
    std::process::exit(linflow::cli::main_with_args(std::env::args_os()));
}
