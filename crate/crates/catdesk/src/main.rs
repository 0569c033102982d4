use std::process::ExitCode;

fn main() -> ExitCode {
    catdesk::cli::main_with_args(std::env::args_os(), std::env::vars())
}
