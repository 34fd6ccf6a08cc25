fn main() {
    std::process::exit(flowforge_cli::cli_main(std::env::args_os()));
}
