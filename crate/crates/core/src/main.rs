fn main() {
    std::process::exit(sce_lab::cli::run(std::env::args_os()));
}
