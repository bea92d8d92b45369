use std::process::ExitCode;

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    match vlogvis_cli::run(std::env::args_os()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            if json_errors {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
