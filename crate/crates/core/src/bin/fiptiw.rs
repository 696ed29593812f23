fn main() {
    std::process::exit(fiptiw::cli::run(std::env::args_os()));
}
