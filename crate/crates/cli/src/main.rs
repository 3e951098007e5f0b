fn main() {
    std::process::exit(opticenter_cli::run(std::env::args_os()));
}
