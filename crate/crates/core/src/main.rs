use clap::Parser;
use min_opt::cli::{error_line, execute, exit_code, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").to_string();
            eprintln!("{}", serde_json::json!({ "error": "config", "code": 2, "message": first, "details": [msg] }));
            std::process::exit(2);
        }
    };
    if let Err(e) = execute(cli) {
        eprintln!("{}", error_line(&e));
        std::process::exit(exit_code(&e));
    }
}
