fn main() {
    std::process::exit(nucseg::cli::run(std::env::args_os()));
}
