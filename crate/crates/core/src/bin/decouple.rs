fn main() {
    std::process::exit(decoupling::cli::run(std::env::args_os()));
}
