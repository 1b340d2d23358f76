fn main() {
    std::process::exit(neutucf::cli::run(std::env::args_os()));
}
