fn main() {
    std::process::exit(biphoton_sim::cli::main_with_args(std::env::args_os()));
}
