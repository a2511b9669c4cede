fn main() {
    std::process::exit(gerve_cli::cli_main(std::env::args_os()));
}
