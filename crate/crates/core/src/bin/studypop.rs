fn main() -> std::process::ExitCode {
    studypop::cli::main_with_args(std::env::args_os())
}
