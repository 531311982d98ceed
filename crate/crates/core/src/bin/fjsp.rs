fn main() {
    std::process::exit(fjsp_rl::cli::run(std::env::args_os()));
}
