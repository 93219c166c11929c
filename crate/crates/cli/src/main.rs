fn main() {
    std::process::exit(cvtomo_cli::run(std::env::args_os()));
}
