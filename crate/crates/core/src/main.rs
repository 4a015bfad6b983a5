use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(deepbf_core::cli::run_command(std::env::args_os()))
}
