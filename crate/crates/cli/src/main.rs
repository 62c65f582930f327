fn main() {
    std::process::exit(cloudreg_cli::run(std::env::args_os()));
}
