fn main() {
    std::process::exit(inforelax::cli::run(std::env::args_os()));
}
