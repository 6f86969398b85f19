fn main() {
    std::process::exit(tokenloss_cli::run(std::env::args_os()));
}
