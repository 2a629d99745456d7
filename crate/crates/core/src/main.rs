use std::process::ExitCode;

fn main() -> ExitCode {
    rssloc::cli::run(std::env::args_os())
}
