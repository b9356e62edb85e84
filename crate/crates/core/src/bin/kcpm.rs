fn main() {
    std::process::exit(kcpm::cli::run(std::env::args_os()));
}
