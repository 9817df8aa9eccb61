fn main() {
    std::process::exit(flapping_cli::run(std::env::args_os()));
}
