fn main() {
    std::process::exit(qcopies::cli::run(std::env::args_os()));
}
