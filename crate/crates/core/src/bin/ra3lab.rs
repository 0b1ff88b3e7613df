fn main() {
    std::process::exit(ra3lab::cli::run_from(std::env::args_os()));
}
