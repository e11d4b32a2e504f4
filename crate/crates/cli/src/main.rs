fn main() {
    std::process::exit(qlev_cli::run(std::env::args_os()));
}
