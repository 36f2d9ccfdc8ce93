fn main() {
    std::process::exit(aam_core::cli::run(std::env::args_os()));
}
