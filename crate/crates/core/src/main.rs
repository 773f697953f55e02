use std::process::ExitCode;

fn main() -> ExitCode {
    bicm_llr::cli::run(std::env::args_os())
}
