use std::process::ExitCode;

fn main() -> ExitCode {
    tsgp::cli::run()
}
