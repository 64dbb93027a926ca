fn main() {
    let code = tsdr_mpc::cli::main_with(std::env::args(), &mut std::io::stdout());
    std::process::exit(code);
}
