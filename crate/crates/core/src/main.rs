fn main() {
    std::process::exit(momentum_margin::harness::cli(std::env::args_os()));
}
