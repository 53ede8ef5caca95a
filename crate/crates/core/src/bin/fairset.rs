fn main() {
    std::process::exit(fairset::cli::main_with_args(std::env::args_os()));
}
