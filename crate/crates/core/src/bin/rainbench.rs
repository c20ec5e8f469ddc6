fn main() {
    std::process::exit(rainbench::cli::run(std::env::args_os()));
}
