fn main() {
    std::process::exit(fracperim::cli::main_with_args(std::env::args_os()));
}
