fn main() -> std::process::ExitCode {
    travnav_cli::main_with(std::env::args_os())
}
