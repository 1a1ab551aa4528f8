fn main() {
    std::process::exit(diatomic_vp::cli::dispatch(std::env::args_os()));
}
