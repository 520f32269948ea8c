fn main() {
    std::process::exit(castlab::cli::main_with_args(std::env::args_os()));
}
