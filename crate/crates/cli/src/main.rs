fn main() {
    std::process::exit(teleqcp_cli::main_with_args(std::env::args_os()));
}
