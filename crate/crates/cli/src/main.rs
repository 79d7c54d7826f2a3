fn main() {
    std::process::exit(lambdaset_cli::cli_main(std::env::args_os()));
}
