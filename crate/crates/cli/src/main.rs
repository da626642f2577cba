fn main() {
    std::process::exit(msoe_cli::main_with_args(std::env::args_os()));
}
