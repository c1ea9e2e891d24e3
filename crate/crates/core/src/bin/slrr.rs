fn main() {
    std::process::exit(slrr::cli::main_with_args(std::env::args_os()));
}
