fn main() {
    std::process::exit(rmrce::cli::run(std::env::args_os()));
}
