fn main() {
    std::process::exit(segdense::cli::run_cli(std::env::args_os()));
}
