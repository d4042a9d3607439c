use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ecotherm::cli::run_command(std::env::args()) as u8)
}
