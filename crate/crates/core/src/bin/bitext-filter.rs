fn main() {
    std::process::exit(bitext_filter::cli::run(std::env::args_os()));
}
