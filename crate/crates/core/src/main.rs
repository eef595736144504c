fn main() {
    std::process::exit(chainport::cli::run_cli(std::env::args_os()));
}
