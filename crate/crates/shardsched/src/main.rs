fn main() {
    std::process::exit(shardsched::cli::main_with_args(std::env::args_os()));
}
