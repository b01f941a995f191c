fn main() {
    std::process::exit(capls::cli::run(std::env::args_os()));
}
