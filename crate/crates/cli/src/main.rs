fn main() {
    std::process::exit(localscore::run(std::env::args_os()));
}
