fn main() -> std::process::ExitCode {
    retrofit_cli::main_with(std::env::args_os())
}
