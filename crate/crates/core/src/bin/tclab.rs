use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tclab::cli::main_from_args(std::env::args_os()) as u8)
}
