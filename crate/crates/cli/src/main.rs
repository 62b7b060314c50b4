use std::process::ExitCode;

use clap::Parser;
use fracsync_cli::{execute, Args, Outcome};

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match execute(&args) {
        Ok(Outcome::Validated(est)) => {
            println!("{}", serde_json::to_string_pretty(&est).expect("json"));
            ExitCode::SUCCESS
        }
        Ok(Outcome::Ran(manifest)) => {
            println!("{}", serde_json::to_string(&manifest).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
