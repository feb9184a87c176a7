fn main() {
    std::process::exit(selfex::cli::run(std::env::args_os()));
}
