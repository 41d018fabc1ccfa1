fn main() {
    std::process::exit(faultloop_cli::run(std::env::args_os()));
}
