fn main() {
    std::process::exit(far_relay::cli::run(std::env::args_os()));
}
