fn main() {
    std::process::exit(sgs::cli::run(std::env::args_os()));
}
