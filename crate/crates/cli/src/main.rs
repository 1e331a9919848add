use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(vcrw_cli::run(std::env::args_os()))
}
