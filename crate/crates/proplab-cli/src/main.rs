fn main() {
    std::process::exit(proplab_cli::execute(std::env::args_os()));
}
