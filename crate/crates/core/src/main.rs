fn main() {
    std::process::exit(bprelab::lab::cli::run(std::env::args_os()));
}
