use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(linklearn::cli::cli_main(std::env::args_os()).clamp(0, 255) as u8)
}
