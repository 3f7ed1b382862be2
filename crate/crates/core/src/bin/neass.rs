fn main() {
    std::process::exit(neass::cli::run(std::env::args_os()));
}
