fn main() {
    std::process::exit(graphex::cli::run(std::env::args_os()));
}
