fn main() {
    std::process::exit(tenv::cli::main_with_args(std::env::args_os()));
}
