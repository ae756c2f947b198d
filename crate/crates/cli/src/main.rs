fn main() {
    std::process::exit(greenspace_cli::main_with_args(std::env::args_os()));
}
