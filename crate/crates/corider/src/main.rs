fn main() {
    std::process::exit(corider::cli::run(std::env::args_os()));
}
