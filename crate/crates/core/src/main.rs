fn main() {
    std::process::exit(laddermem::cli::run(std::env::args_os()));
}
