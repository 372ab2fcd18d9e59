fn main() {
    std::process::exit(gfssm_cli::run(std::env::args_os()));
}
