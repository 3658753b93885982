fn main() {
    std::process::exit(ctrlsynth::cli::main_with_args(std::env::args_os()));
}
