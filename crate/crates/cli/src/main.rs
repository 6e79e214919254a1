fn main() {
    std::process::exit(score_cli::run_command(std::env::args_os()));
}
