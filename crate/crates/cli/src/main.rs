fn main() {
    std::process::exit(ddec_cli::run(std::env::args_os()));
}
