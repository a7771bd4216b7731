fn main() {
    std::process::exit(gpdthresh::cli::run(std::env::args_os()));
}
