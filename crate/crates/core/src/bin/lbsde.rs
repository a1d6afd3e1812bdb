fn main() {
    std::process::exit(loggrowth_bsde::cli::main_with_args(std::env::args_os()));
}
