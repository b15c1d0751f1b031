fn main() {
    std::process::exit(multiplex_locate::cli::run(std::env::args_os()));
}
