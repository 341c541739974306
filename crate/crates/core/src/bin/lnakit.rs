fn main() {
    std::process::exit(lnakit::cli::run(std::env::args_os()));
}
