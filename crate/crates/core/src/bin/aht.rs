fn main() {
    std::process::exit(aht_core::cli::run(std::env::args_os()));
}
