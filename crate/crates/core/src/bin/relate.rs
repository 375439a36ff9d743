fn main() {
    std::process::exit(relate::cli::run(std::env::args_os()));
}
