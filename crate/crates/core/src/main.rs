fn main() {
    std::process::exit(rho_raw::cli::run(std::env::args_os()));
}
