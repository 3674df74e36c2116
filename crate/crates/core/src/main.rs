fn main() {
    std::process::exit(relcap::cli::main_with_args(std::env::args_os()));
}
