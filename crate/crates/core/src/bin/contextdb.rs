use std::io::{self, Write};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    let mut stderr = io::stderr();
    let code = contextdb::cli::run(
        std::env::args_os(),
        &mut stdin.lock(),
        &mut stdout,
        &mut stderr,
    );
    let _ = stdout.flush();
    std::process::exit(code);
}
