fn main() {
    std::process::exit(kgalign_cli::main_with(std::env::args_os()));
}
