use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = nejunction_cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match nejunction_cli::run(&cli, &mut stdout) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
