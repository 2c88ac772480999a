use std::process::ExitCode;

fn main() -> ExitCode {
    vtrace::cli::main_with_args(std::env::args_os())
}
