fn main() {
    std::process::exit(difl::cli::run(std::env::args_os()));
}
