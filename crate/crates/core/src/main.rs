fn main() {
    std::process::exit(antfis::cli::run(std::env::args_os()));
}
