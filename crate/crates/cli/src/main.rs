use bcwi_cli::commands::{dispatch, exit_code, Cli, EXIT_OK, EXIT_USAGE};
use clap::Parser;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
