fn main() {
    std::process::exit(stable_spde::cli::run(std::env::args_os()));
}
