fn main() {
    std::process::exit(qmarkov::cli::main_with_args(std::env::args_os()));
}
