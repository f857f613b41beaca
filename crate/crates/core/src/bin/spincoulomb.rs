fn main() {
    std::process::exit(spincoulomb::cli::main_with_args(std::env::args_os()));
}
