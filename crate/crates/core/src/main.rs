fn main() {
    std::process::exit(tep_jcc::cli::run(std::env::args_os()));
}
