fn main() {
    std::process::exit(sticc::cli::run(std::env::args_os()));
}
