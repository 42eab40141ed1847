fn main() {
    std::process::exit(probstack::cli::run(std::env::args_os()));
}
