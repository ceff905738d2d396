fn main() {
    std::process::exit(capsys::cli::run(std::env::args_os()));
}
