fn main() {
    std::process::exit(slowfast_nse::cli::run(std::env::args_os()));
}
