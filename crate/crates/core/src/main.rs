fn main() {
    std::process::exit(relmatch::cli::run(std::env::args_os()));
}
