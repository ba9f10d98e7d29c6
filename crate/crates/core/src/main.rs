fn main() {
    std::process::exit(seqflow::cli_io::run_cli(std::env::args_os()));
}
