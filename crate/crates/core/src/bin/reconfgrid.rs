fn main() {
    std::process::exit(reconfgrid::cli::main_with_args(std::env::args_os()));
}
