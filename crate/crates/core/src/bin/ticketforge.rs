fn main() {
    let env_out = std::env::var_os(ticketforge::cli::OUT_ENV).map(Into::into);
    let code = ticketforge::cli::main_with(
        std::env::args_os(),
        env_out,
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
