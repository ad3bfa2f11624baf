use std::process::ExitCode;

fn main() -> ExitCode {
    anticollapse::cli::run(std::env::args_os())
}
