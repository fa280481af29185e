fn main() {
    std::process::exit(fidray::cli::run(std::env::args_os()));
}
