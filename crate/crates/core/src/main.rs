use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mft_route::cli::run(std::env::args_os()))
}
