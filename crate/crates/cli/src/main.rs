fn main() {
    std::process::exit(ofbm_cli::run_command(std::env::args_os()));
}
