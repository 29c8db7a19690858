fn main() {
    std::process::exit(prada::cli::main_with_code(std::env::args_os()));
}
