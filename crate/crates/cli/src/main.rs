fn main() {
    std::process::exit(momentarb_cli::run(std::env::args_os()));
}
