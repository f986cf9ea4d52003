fn main() {
    std::process::exit(urnlab::cli::run(std::env::args_os()));
}
