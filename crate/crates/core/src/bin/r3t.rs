use std::process::ExitCode;

fn main() -> ExitCode {
    r3t_core::cli::main()
}
