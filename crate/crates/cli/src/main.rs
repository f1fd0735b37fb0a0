fn main() {
    std::process::exit(vropt::run(std::env::args_os()));
}
