fn main() {
    std::process::exit(dial_cli::dispatch(std::env::args_os()));
}
