fn main() {
    std::process::exit(darkpool::cli::run_from(std::env::args_os()));
}
