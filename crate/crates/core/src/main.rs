use std::process::ExitCode;

fn main() -> ExitCode {
    dquon::cli::main()
}
