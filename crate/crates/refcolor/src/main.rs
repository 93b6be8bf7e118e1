fn main() -> std::process::ExitCode {
    refcolor::cli::run(std::env::args_os())
}
