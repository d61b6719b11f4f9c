fn main() {
    std::process::exit(hyres_cli::run(std::env::args_os()));
}
