fn main() {
    std::process::exit(playa::cli::run(std::env::args_os()));
}
