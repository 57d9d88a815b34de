fn main() {
    std::process::exit(blockemu::cli::run(std::env::args_os()));
}
