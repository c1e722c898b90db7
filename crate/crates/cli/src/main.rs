fn main() -> std::process::ExitCode {
    rplu_cli::run(std::env::args_os())
}
