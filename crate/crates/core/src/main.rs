fn main() {
    std::process::exit(risopt::harness::cli_main(std::env::args_os()));
}
