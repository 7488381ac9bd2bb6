fn main() {
    std::process::exit(timekan::run(std::env::args_os()));
}
