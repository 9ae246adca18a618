fn main() {
    std::process::exit(micropost::cli::main_with_args(std::env::args_os()));
}
