fn main() {
    std::process::exit(reachflow_cli::run(std::env::args_os()));
}
