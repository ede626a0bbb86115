fn main() {
    std::process::exit(dsm_refine::cli::main_with_args(std::env::args_os()));
}
