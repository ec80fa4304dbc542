fn main() {
    std::process::exit(debranges_lab::cli::run(std::env::args_os()));
}
