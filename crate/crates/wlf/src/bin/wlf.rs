fn main() {
    std::process::exit(wlf::cli::run(std::env::args_os()));
}
