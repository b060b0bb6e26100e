fn main() {
    std::process::exit(lfbleak_cli::cli::run(std::env::args_os()));
}
