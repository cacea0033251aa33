fn main() {
    let code = mono3d_cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
