fn main() {
    std::process::exit(osa_core::cli::run(std::env::args_os()));
}
