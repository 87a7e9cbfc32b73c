fn main() {
    std::process::exit(mcseg_core::cli::run_cli(std::env::args_os()));
}
