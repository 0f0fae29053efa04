fn main() {
    std::process::exit(projsym::cli::run(std::env::args_os()));
}
