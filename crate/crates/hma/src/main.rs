use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(hma::cli_main(std::env::args_os()))
}
