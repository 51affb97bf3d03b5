use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(slowfast_cli::run(std::env::args_os()))
}
