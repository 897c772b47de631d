use std::process::ExitCode;

fn main() -> ExitCode {
    camworld::cli::main()
}
