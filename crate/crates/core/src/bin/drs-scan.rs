fn main() {
    std::process::exit(drs_scan::cli::main_with_args(std::env::args_os()));
}
