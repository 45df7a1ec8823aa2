fn main() {
    std::process::exit(ccnets::cli::run(std::env::args_os()));
}
