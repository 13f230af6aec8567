fn main() {
    std::process::exit(calpha_cli::run(std::env::args().collect()));
}
