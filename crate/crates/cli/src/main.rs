use std::process::ExitCode;

fn main() -> ExitCode {
    match acc_cli::run(std::env::args_os()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
