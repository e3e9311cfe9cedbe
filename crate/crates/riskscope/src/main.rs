use std::process::ExitCode;

fn main() -> ExitCode {
    let env = |k: &str| std::env::var(k).ok();
    let code = riskscope::cli::run(std::env::args_os(), &env, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
