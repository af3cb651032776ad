fn main() {
    std::process::exit(fkpp_cli::cli::main_with(std::env::args_os()));
}
