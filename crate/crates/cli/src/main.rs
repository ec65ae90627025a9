fn main() {
    std::process::exit(locfield_cli::run(std::env::args().skip(1)));
}
